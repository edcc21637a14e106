use clap::{Args, ValueEnum};
use nalgebra::DVector;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::path::PathBuf;

use tcsim_core::calibration::{analytic_spec, calibrate_gate, resonance_linewidth, GateKind, GateSpec, RefineOptions};
use tcsim_core::device::DeviceConfig;
use tcsim_core::dynamics::{chevron as chevron_map, propagate, DressedBasis, PropagationOptions};
use tcsim_core::effective::{coupling_sweep, static_couplings, zero_coupling_flux, CouplingForm, Variant};
use tcsim_core::fluxcontrol::{CrosstalkMatrix, TransferTable};
use tcsim_core::numeric::linspace;
use tcsim_core::tomography::{
    average_fidelity, computational_block, fit_fsim, pauli2_label, simulate_qpt, virtual_z_correct, ProcessTensor,
    QptSettings,
};

use crate::output::{read_payload, Format, Meta, Writer};
use crate::{CliError, Common};

type Out = Result<String, CliError>;

struct Loaded {
    cfg: DeviceConfig,
    name: String,
    text: String,
}

fn load(common: &Common) -> Result<Loaded, CliError> {
    let (name, text) = match &common.config {
        Some(p) => (
            p.display().to_string(),
            std::fs::read_to_string(p).map_err(|e| CliError::io("config", p, e))?,
        ),
        None => ("bundled".to_string(), DeviceConfig::bundled_source().to_string()),
    };
    let cfg = DeviceConfig::from_toml_str(&text).map_err(|e| CliError::new("config", format!("{name}: {e}")))?;
    Ok(Loaded { cfg, name, text })
}

fn writer(common: &Common, loaded: &Loaded, command: &str) -> Result<Writer, CliError> {
    let meta = Meta::new(command.to_string(), loaded.name.clone(), &loaded.text, common.seed);
    Writer::new(&common.out_dir, meta)
}

fn prop_opts(cfg: &DeviceConfig) -> PropagationOptions {
    PropagationOptions {
        dt: cfg.simulation.dt_ns,
        form: CouplingForm::Full,
    }
}

fn gate_states(kind: GateKind) -> ([usize; 3], [usize; 3]) {
    match kind {
        GateKind::ISwap => ([1, 0, 0], [0, 0, 1]),
        _ => ([1, 0, 1], [2, 0, 0]),
    }
}

fn parse_gate(s: &str) -> Result<GateKind, CliError> {
    s.parse::<GateKind>().map_err(|e| CliError::core("gate", e))
}

pub fn device_show(common: &Common) -> Out {
    let l = load(common)?;
    let model = l.cfg.model().map_err(|e| CliError::core("model", e))?;
    let idle = model.idle().map_err(|e| CliError::core("model", e))?;
    let mut gates = serde_json::Map::new();
    for (name, g) in [("iswap", l.cfg.gates.iswap), ("cz20", l.cfg.gates.cz20)] {
        let p = model
            .at_coupler(g.coupler_bias_phi0)
            .map_err(|e| CliError::core("model", e))?;
        let s = static_couplings(&p, Variant::Full).map_err(|e| CliError::core("couplings", e))?;
        gates.insert(name.into(), json!({ "config": g, "params": p, "static": s }));
    }
    let data = json!({
        "name": l.cfg.meta.name,
        "synthetic": l.cfg.meta.synthetic,
        "charge_energies_ghz": model.energies,
        "idle": idle,
        "gates": gates,
        "warnings": model.warnings(),
    });
    let mut w = writer(common, &l, "device show")?;
    match common.format {
        Format::Json => w.json("device", &data)?,
        Format::Csv => {
            let mut body = String::from("quantity,value_ghz\n");
            for (k, v) in [
                ("f1", idle.f1),
                ("f2", idle.f2),
                ("fc", idle.fc),
                ("eta1", idle.eta1),
                ("eta2", idle.eta2),
                ("etac", idle.etac),
                ("g1c", idle.g1c),
                ("g2c", idle.g2c),
                ("g12", idle.g12),
            ] {
                body.push_str(&format!("{k},{v}\n"));
            }
            w.csv("device", &body)?;
        }
    }
    Ok(format!(
        "f1={:.4} f2={:.4} fc={:.4} eta1={:.4} eta2={:.4} g12={:.5} warnings={}",
        idle.f1,
        idle.f2,
        idle.fc,
        idle.eta1,
        idle.eta2,
        idle.g12,
        model.warnings().len()
    ))
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantArg {
    Full,
    MainText,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Coupler flux range, Φ0.
    #[arg(long, default_value_t = -0.1, allow_hyphen_values = true)]
    from: f64,
    #[arg(long, default_value_t = 0.35)]
    to: f64,
    #[arg(long, default_value_t = 91)]
    points: usize,
    #[arg(long, value_enum, default_value_t = VariantArg::Full)]
    variant: VariantArg,
}

pub fn sweep_coupling(common: &Common, a: &SweepArgs) -> Out {
    if a.points < 2 || !(a.to > a.from) {
        return Err(CliError::new("sweep", "need --to > --from and at least 2 points"));
    }
    let l = load(common)?;
    let model = l.cfg.model().map_err(|e| CliError::core("model", e))?;
    let variant = match a.variant {
        VariantArg::Full => Variant::Full,
        VariantArg::MainText => Variant::MainText,
    };
    let fluxes = linspace(a.from, a.to, a.points);
    let sweep = coupling_sweep(&model, &fluxes, variant).map_err(|e| CliError::core("sweep", e))?;
    let rows: Vec<Vec<f64>> = sweep
        .iter()
        .map(|(phi, s)| vec![*phi, s.g01, s.g02, s.g20, s.f01_1, s.f01_2, s.delta1, s.delta2])
        .collect();
    let mut zeros = Vec::new();
    for w in sweep.windows(2) {
        if w[0].1.g01 * w[1].1.g01 < 0.0 {
            if let Some(z) =
                zero_coupling_flux(&model, w[0].0, w[1].0, variant).map_err(|e| CliError::core("sweep", e))?
            {
                zeros.push(z);
            }
        }
    }
    let mut w = writer(common, &l, "sweep coupling")?;
    w.table(
        "coupling_sweep",
        common.format,
        &[
            "coupler_flux_phi0",
            "g01_ghz",
            "g02_ghz",
            "g20_ghz",
            "f01_1_ghz",
            "f01_2_ghz",
            "delta1_ghz",
            "delta2_ghz",
        ],
        &rows,
    )?;
    let zs: Vec<String> = zeros.iter().map(|z| format!("{z:.5}")).collect();
    Ok(format!("points={} g01_zero_phi0=[{}]", rows.len(), zs.join(",")))
}

#[derive(Args, Debug)]
pub struct ChevronArgs {
    /// iswap or cz.
    #[arg(long, default_value = "iswap")]
    gate: String,
    #[arg(long, default_value_t = 21)]
    amp_points: usize,
    #[arg(long, default_value_t = 41)]
    dur_points: usize,
    /// Half-width of the amplitude grid, Φ0 (default three resonance
    /// linewidths).
    #[arg(long)]
    amp_span: Option<f64>,
    /// Longest pulse, ns (default two exchange cycles).
    #[arg(long)]
    max_duration: Option<f64>,
}

pub fn chevron(common: &Common, a: &ChevronArgs) -> Out {
    let kind = parse_gate(&a.gate)?;
    if a.amp_points < 2 || a.dur_points < 2 {
        return Err(CliError::new("chevron", "need at least 2 points per axis"));
    }
    let l = load(common)?;
    let model = l.cfg.model().map_err(|e| CliError::core("model", e))?;
    let (spec, g) = analytic_spec(kind, &l.cfg).map_err(|e| CliError::core("chevron", e))?;
    let span = match a.amp_span {
        Some(s) => s,
        None => 3.0 * resonance_linewidth(&model, &spec).map_err(|e| CliError::core("chevron", e))?,
    };
    let longest = a.max_duration.unwrap_or(spec.ramp_ns + 1.0 / g);
    if !(longest > 2.0 * spec.ramp_ns) {
        return Err(CliError::new("chevron", "max duration must exceed two ramps"));
    }
    let amps = linspace(
        (spec.amplitude_phi0 - span).max(0.0),
        spec.amplitude_phi0 + span,
        a.amp_points,
    );
    let shortest = 2.0 * spec.ramp_ns + (longest - 2.0 * spec.ramp_ns) / a.dur_points as f64;
    let durs = linspace(shortest, longest, a.dur_points);
    let (initial, target) = gate_states(kind);
    let map = chevron_map(
        &model,
        &spec.drive(&model),
        &amps,
        &durs,
        initial,
        target,
        &prop_opts(&l.cfg),
    )
    .map_err(|e| CliError::core("chevron", e))?;
    let (i, j) = map.argmax();
    let mut w = writer(common, &l, &format!("chevron {}", kind.name()))?;
    match common.format {
        Format::Csv => w.csv(&format!("chevron_{}", kind.name()), &map.to_csv())?,
        Format::Json => w.json(&format!("chevron_{}", kind.name()), &map)?,
    }
    Ok(format!(
        "max_population={:.5} amplitude_phi0={:.6} duration_ns={:.3}",
        map.populations[i][j], amps[i], durs[j]
    ))
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// iswap, cz (same as cz20) or cz02.
    gate: String,
    #[arg(long, default_value_t = 5)]
    points: usize,
    #[arg(long, default_value_t = 6)]
    levels: usize,
}

pub fn calibrate(common: &Common, a: &CalibrateArgs) -> Out {
    let kind = parse_gate(&a.gate)?;
    if a.points < 3 || a.levels == 0 {
        return Err(CliError::new("calibrate", "need at least 3 points and 1 level"));
    }
    let l = load(common)?;
    let opts = RefineOptions {
        points: a.points,
        levels: a.levels,
        ..RefineOptions::default()
    };
    let cal = calibrate_gate(kind, &l.cfg, &opts).map_err(|e| CliError::core("calibrate", e))?;
    let name = kind.name();
    let mut rows = Vec::new();
    for (level, m) in cal.chevrons.iter().enumerate() {
        for (amp, pops) in m.amplitudes.iter().zip(&m.populations) {
            for (d, p) in m.durations.iter().zip(pops) {
                rows.push(vec![level as f64, *amp, *d, *p]);
            }
        }
    }
    let mut w = writer(common, &l, &format!("calibrate {name}"))?;
    w.json(&format!("gatespec_{name}"), &cal.spec)?;
    w.json(&format!("report_{name}"), &cal.report)?;
    w.table(
        &format!("refine_{name}"),
        common.format,
        &["level", "amplitude_phi0", "duration_ns", "population"],
        &rows,
    )?;
    let r = &cal.report;
    Ok(format!(
        "gate={name} F_avg={:.5} theta={:.4} phi={:.4} leakage={:.2e} duration_ns={:.3} amplitude_phi0={:.6}",
        r.average_fidelity, r.fsim.theta, r.fsim.phi, r.leakage, cal.spec.duration_ns, cal.spec.amplitude_phi0
    ))
}

#[derive(Args, Debug)]
pub struct TomoArgs {
    /// GateSpec JSON written by `calibrate`.
    #[arg(long)]
    spec: PathBuf,
    /// Shots per setting for sampled tomography with readout error; 0 gives
    /// the exact channel.
    #[arg(long, default_value_t = 0)]
    shots: u64,
}

fn ptm_rows(ptm: &ProcessTensor) -> Vec<Vec<f64>> {
    (0..16).map(|i| (0..16).map(|j| ptm.ptm[(i, j)]).collect()).collect()
}

pub fn tomo(common: &Common, a: &TomoArgs) -> Out {
    let l = load(common)?;
    let payload = read_payload(&a.spec)?;
    let spec: GateSpec = serde_json::from_value(payload)
        .map_err(|e| CliError::new("input", format!("{}: not a GateSpec: {e}", a.spec.display())))?;
    let model = l.cfg.model().map_err(|e| CliError::core("model", e))?;
    let opts = prop_opts(&l.cfg);
    let prop = propagate(&model, &spec.drive(&model), &opts).map_err(|e| CliError::core("propagate", e))?;
    let basis = DressedBasis::new(&model.idle().map_err(|e| CliError::core("model", e))?, opts.form);
    let block = computational_block(&prop.unitary, &basis);
    let corrected = virtual_z_correct(&block, spec.virtual_z[0], spec.virtual_z[1]);
    let ptm = if a.shots > 0 {
        let settings = QptSettings {
            shots: a.shots,
            readout: [l.cfg.readout.fidelity_q1, l.cfg.readout.fidelity_q2],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
        simulate_qpt(&corrected, &settings, &mut rng).map_err(|e| CliError::core("tomography", e))?
    } else {
        ProcessTensor::from_operator(&corrected)
    };
    let ideal = ProcessTensor::from_operator(&spec.kind.ideal());
    let f_avg = average_fidelity(&ptm, &ideal);
    let fsim = fit_fsim(&ptm);
    let name = spec.kind.name();
    let mut w = writer(common, &l, &format!("tomo {name}"))?;
    match common.format {
        Format::Csv => w.csv(&format!("ptm_{name}"), &ptm.to_csv())?,
        Format::Json => {
            let labels: Vec<String> = (0..16).map(pauli2_label).collect();
            w.json(
                &format!("ptm_{name}"),
                &json!({ "labels": labels, "ptm": ptm_rows(&ptm) }),
            )?
        }
    }
    w.json(
        &format!("tomo_{name}"),
        &json!({
            "spec": spec,
            "shots": a.shots,
            "average_fidelity": f_avg,
            "leakage": ptm.leakage,
            "unitarity": ptm.unitarity(),
            "fsim": fsim,
            "unitarity_error": prop.unitarity_error,
        }),
    )?;
    Ok(format!(
        "F_avg={f_avg:.4} theta={:.4} phi={:.4} leakage={:.2e}",
        fsim.theta, fsim.phi, ptm.leakage
    ))
}

#[derive(Args, Debug)]
pub struct FluxArgs {
    /// Crosstalk CSV with a `line` label column (default: reference matrix).
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Target fluxes in Φ0, one per line in matrix order (default: the iSWAP
    /// operating point).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    target: Option<Vec<f64>>,
}

pub fn flux_invert(common: &Common, a: &FluxArgs) -> Out {
    let l = load(common)?;
    let m = match &a.matrix {
        Some(p) => CrosstalkMatrix::from_csv_path(p).map_err(|e| CliError::core("flux", e))?,
        None => CrosstalkMatrix::reference(),
    };
    let target = match &a.target {
        Some(t) => t.clone(),
        None => m
            .labels
            .iter()
            .map(|lab| match lab.as_str() {
                "q1" => Ok(l.cfg.q1.flux_bias_phi0),
                "q2" => Ok(l.cfg.q2.flux_bias_phi0),
                "coupler" => Ok(l.cfg.gates.iswap.coupler_bias_phi0),
                other => Err(CliError::new(
                    "flux",
                    format!("no default target for line {other:?}; pass --target"),
                )),
            })
            .collect::<Result<_, _>>()?,
    };
    let inv = m.inverse().map_err(|e| CliError::core("flux", e))?;
    let n = m.labels.len();
    let identity_err = (&m.matrix * &inv - nalgebra::DMatrix::<f64>::identity(n, n)).amax();
    let sources = m
        .compensate(&DVector::from_vec(target.clone()))
        .map_err(|e| CliError::core("flux", e))?;
    let mut w = writer(common, &l, "flux invert")?;
    match common.format {
        Format::Csv => {
            let mut body = format!("line,{}\n", m.labels.join(","));
            for (i, lab) in m.labels.iter().enumerate() {
                let row: Vec<String> = (0..n).map(|j| inv[(i, j)].to_string()).collect();
                body.push_str(&format!("{lab},{}\n", row.join(",")));
            }
            w.csv("crosstalk_inverse", &body)?;
            let mut body = String::from("line,target_phi0,source_phi0\n");
            for (i, lab) in m.labels.iter().enumerate() {
                body.push_str(&format!("{lab},{},{}\n", target[i], sources[i]));
            }
            w.csv("compensation", &body)?;
        }
        Format::Json => {
            let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect();
            w.json("crosstalk_inverse", &json!({ "labels": m.labels, "inverse": rows }))?;
            w.json(
                "compensation",
                &json!({ "labels": m.labels, "target_phi0": target, "source_phi0": sources.as_slice() }),
            )?;
        }
    }
    let s: Vec<String> = sources.iter().map(|v| format!("{v:.6}")).collect();
    Ok(format!(
        "condition={:.4} identity_error={identity_err:.2e} sources=[{}]",
        m.condition_number(),
        s.join(",")
    ))
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    /// Requested q2 modulation amplitude, Φ0.
    #[arg(long)]
    amplitude: f64,
    /// Modulation frequency, GHz (default: the iSWAP modulation frequency).
    #[arg(long)]
    mod_freq: Option<f64>,
    /// Two-column CSV `mod_freq_ghz,ratio` (default: bundled table).
    #[arg(long)]
    table: Option<PathBuf>,
}

pub fn transfer_apply(common: &Common, a: &TransferArgs) -> Out {
    let l = load(common)?;
    let table = match &a.table {
        Some(p) => TransferTable::from_csv_path(p).map_err(|e| CliError::core("transfer", e))?,
        None => TransferTable::bundled(),
    };
    let f = a.mod_freq.unwrap_or(l.cfg.gates.iswap.mod_freq_ghz);
    let ratio = table.ratio(f).map_err(|e| CliError::core("transfer", e))?;
    let achieved = table.apply(a.amplitude, f).map_err(|e| CliError::core("transfer", e))?;
    let predistorted = a.amplitude / ratio;
    let mut w = writer(common, &l, "transfer apply")?;
    w.table(
        "transfer",
        common.format,
        &[
            "mod_freq_ghz",
            "ratio",
            "requested_phi0",
            "achieved_phi0",
            "predistorted_phi0",
        ],
        &[vec![f, ratio, a.amplitude, achieved, predistorted]],
    )?;
    Ok(format!(
        "ratio={ratio:.5} achieved_phi0={achieved:.6} predistorted_phi0={predistorted:.6}"
    ))
}
