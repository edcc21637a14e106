//! Calibration of parametric-resonance iSWAP and CZ gates.

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::device::{DeviceConfig, Model};
use crate::dynamics::{
    chevron, fit_exchange, propagate, ChevronMap, DressedBasis, ExchangeFit, GateDrive, PropagationOptions,
};
use crate::effective::{average_and_excursion, modulated_couplings, Variant};
use crate::error::{Error, Result, StageExt};
use crate::fluxcontrol::{FluxLine, FluxPulse};
use crate::numeric::{brent_root, linspace};
use crate::spectrum::{DeviceParams, TransmonSpec};
use crate::tomography::{
    average_fidelity, computational_block, cz, extract_virtual_z, fit_fsim, iswap, phase_error, virtual_z_correct,
    FSimFit, ProcessTensor,
};

/// Largest q2 modulation amplitude considered, Φ0.
pub const MAX_AMPLITUDE: f64 = 0.5;
/// Resonance residual bound, GHz.
pub const RESONANCE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    #[serde(rename = "iswap")]
    ISwap,
    Cz20,
    Cz02,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::ISwap => "iswap",
            GateKind::Cz20 => "cz20",
            GateKind::Cz02 => "cz02",
        }
    }

    /// Frequency f̄2 must reach: f1, f1 − η1 or f1 + η2.
    pub fn resonance_target(self, p: &DeviceParams) -> f64 {
        match self {
            GateKind::ISwap => p.f1,
            GateKind::Cz20 => p.f1 - p.eta1,
            GateKind::Cz02 => p.f1 + p.eta2,
        }
    }

    pub fn ideal(self) -> Matrix4<Complex64> {
        match self {
            GateKind::ISwap => iswap(),
            _ => cz(),
        }
    }

    /// τ·g for the gate: half an exchange cycle for iSWAP, a full cycle for CZ.
    pub fn cycle_fraction(self) -> f64 {
        match self {
            GateKind::ISwap => 0.25,
            _ => 0.5,
        }
    }
}

impl std::str::FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iswap" => Ok(GateKind::ISwap),
            "cz" | "cz20" => Ok(GateKind::Cz20),
            "cz02" => Ok(GateKind::Cz02),
            other => Err(Error::invalid("gate kind", format!("unknown gate '{other}'"))),
        }
    }
}

/// A calibrated operating point. `duration` includes one ramp; the
/// interaction time is `duration − ramp`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub kind: GateKind,
    pub amplitude_phi0: f64,
    pub mod_freq_ghz: f64,
    pub duration_ns: f64,
    pub ramp_ns: f64,
    pub coupler_bias_phi0: f64,
    pub virtual_z: [f64; 2],
    pub resonance_residual_ghz: f64,
}

impl GateSpec {
    pub fn drive(&self, model: &Model) -> GateDrive {
        GateDrive::parametric(
            model,
            self.amplitude_phi0,
            self.mod_freq_ghz,
            self.coupler_bias_phi0,
            self.duration_ns,
            self.ramp_ns,
        )
    }

    pub fn interaction_time(&self) -> f64 {
        self.duration_ns - self.ramp_ns
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Resonance {
    pub amplitude: f64,
    pub f2_avg: f64,
    pub excursion: f64,
    pub residual: f64,
}

fn q2_pulse(phi_dc: f64, amplitude: f64, mod_freq: f64) -> FluxPulse {
    FluxPulse::modulated(FluxLine::Q2, phi_dc, amplitude, mod_freq, 1.0, 0.0)
}

/// Amplitude where the time-averaged q2 frequency meets the gate's resonance.
pub fn find_resonance_amplitude(
    kind: GateKind,
    q2: &TransmonSpec,
    p: &DeviceParams,
    phi_dc: f64,
    mod_freq: f64,
) -> Result<Resonance> {
    let target = kind.resonance_target(p);
    let avg = |a: f64| average_and_excursion(q2, &q2_pulse(phi_dc, a, mod_freq));
    let (top, _) = avg(0.0)?;
    if (top - target).abs() < RESONANCE_TOL {
        return Ok(Resonance {
            amplitude: 0.0,
            f2_avg: top,
            excursion: 0.0,
            residual: top - target,
        });
    }
    let (bottom, _) = avg(MAX_AMPLITUDE)?;
    let (lo, hi) = (top.min(bottom), top.max(bottom));
    if !(target > lo && target < hi) {
        return Err(Error::ResonanceUnreachable { target, lo, hi });
    }
    let root = brent_root(
        |a| avg(a).map(|v| v.0 - target).unwrap_or(f64::NAN),
        0.0,
        MAX_AMPLITUDE,
        1e-13,
    )
    .ok_or(Error::ResonanceUnreachable { target, lo, hi })?;
    let (f2_avg, excursion) = avg(root)?;
    let residual = f2_avg - target;
    if residual.abs() >= RESONANCE_TOL {
        return Err(Error::invalid(
            "resonance",
            format!("residual {residual:.3e} GHz above 1 kHz"),
        ));
    }
    Ok(Resonance {
        amplitude: root,
        f2_avg,
        excursion,
        residual,
    })
}

/// Modulation frequencies at which the n = −2 sideband of each gate becomes
/// resonant, versus amplitude.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollisionMap {
    pub amplitudes: Vec<f64>,
    pub f2_avg: Vec<f64>,
    pub iswap: Vec<f64>,
    pub cz02: Vec<f64>,
    pub cz20: Vec<f64>,
    pub guard_band: f64,
    pub recommended_min: f64,
}

impl CollisionMap {
    /// Distance of `mod_freq` above the recommendation, GHz.
    pub fn margin(&self, mod_freq: f64) -> f64 {
        mod_freq - self.recommended_min
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("amplitude_phi0,f2_avg_ghz,iswap_ghz,cz02_ghz,cz20_ghz\n");
        for i in 0..self.amplitudes.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.amplitudes[i], self.f2_avg[i], self.iswap[i], self.cz02[i], self.cz20[i]
            ));
        }
        out
    }
}

pub fn sideband_collision_map(
    p: &DeviceParams,
    q2: &TransmonSpec,
    phi_dc: f64,
    amplitudes: &[f64],
    guard_band: f64,
) -> Result<CollisionMap> {
    if amplitudes.is_empty() {
        return Err(Error::invalid("collision map", "amplitude grid is empty"));
    }
    let f2_avg = amplitudes
        .iter()
        .map(|&a| Ok(average_and_excursion(q2, &q2_pulse(phi_dc, a, 0.3))?.0))
        .collect::<Result<Vec<f64>>>()?;
    let curve = |shift: f64| -> Vec<f64> { f2_avg.iter().map(|f| ((f - p.f1 - shift) / 2.0).abs()).collect() };
    let iswap = curve(0.0);
    let cz02 = curve(p.eta2);
    let cz20 = curve(-p.eta1);
    let worst = iswap.iter().chain(&cz02).chain(&cz20).cloned().fold(0.0, f64::max);
    Ok(CollisionMap {
        amplitudes: amplitudes.to_vec(),
        f2_avg,
        iswap,
        cz02,
        cz20,
        guard_band,
        recommended_min: worst + guard_band,
    })
}

/// Gate time from the effective coupling: 1/(4g) for iSWAP, 1/(2g) for CZ.
pub fn set_duration(kind: GateKind, g_eff: f64) -> Result<f64> {
    if !(g_eff > 0.0) {
        return Err(Error::invalid(
            "effective coupling",
            format!("must be positive, got {g_eff}"),
        ));
    }
    Ok(kind.cycle_fraction() / g_eff)
}

/// n = 0 effective coupling driving the gate: |g̃01| for iSWAP, |g̃20| for CZ20.
pub fn effective_coupling(
    kind: GateKind,
    model: &Model,
    coupler_bias: f64,
    amplitude: f64,
    mod_freq: f64,
    n_max: usize,
) -> Result<f64> {
    let p = model.at_coupler(coupler_bias)?;
    let pulse = q2_pulse(model.bias[1], amplitude, mod_freq);
    let m = modulated_couplings(&p, &pulse, &model.q2, n_max, Variant::Full)?;
    Ok(match kind {
        GateKind::ISwap => m.g01_at(0).norm(),
        GateKind::Cz20 => m.g20_at(0).norm(),
        GateKind::Cz02 => m.g02_at(0).norm(),
    })
}

/// Coupler bias in [lo, hi] where the gate's effective coupling reaches
/// `target` at its resonance amplitude.
pub fn coupler_bias_for_coupling(
    kind: GateKind,
    model: &Model,
    mod_freq: f64,
    target: f64,
    lo: f64,
    hi: f64,
    n_max: usize,
) -> Result<f64> {
    let g = |bias: f64| -> f64 {
        let run = || -> Result<f64> {
            let p = model.at_coupler(bias)?;
            let res = find_resonance_amplitude(kind, &model.q2, &p, model.bias[1], mod_freq)?;
            effective_coupling(kind, model, bias, res.amplitude, mod_freq, n_max)
        };
        run().map(|v| v - target).unwrap_or(f64::NAN)
    };
    brent_root(g, lo, hi, 1e-9).ok_or_else(|| {
        Error::invalid(
            "coupler bias",
            format!("coupling {target} GHz not bracketed in [{lo}, {hi}] Φ0"),
        )
    })
}

/// Grid settings for chevron refinement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineOptions {
    pub points: usize,
    pub levels: usize,
    /// Half-width of the first amplitude grid; `None` uses 1.5 resonance
    /// linewidths 2g/|df̄2/dA|.
    pub amplitude_span: Option<f64>,
    pub duration_span: f64,
    pub propagation: PropagationOptions,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            points: 5,
            levels: 6,
            amplitude_span: None,
            duration_span: 6.0,
            propagation: PropagationOptions::default(),
        }
    }
}

/// Zooming 2D search on chevron grids for the (amplitude, duration) maximizing
/// `target` population from `initial`. The first grid must contain an
/// interior maximum.
#[allow(clippy::too_many_arguments)]
fn zoom_2d(
    model: &Model,
    drive: &GateDrive,
    center: (f64, f64),
    span: f64,
    initial: [usize; 3],
    target: [usize; 3],
    opts: &RefineOptions,
    maps: &mut Vec<ChevronMap>,
) -> Result<(f64, f64, f64)> {
    let (mut a0, mut t0) = center;
    let (mut sa, mut st) = (span, opts.duration_span);
    let mut best = f64::MIN;
    for level in 0..opts.levels {
        let amps = linspace(a0 - sa, a0 + sa, opts.points);
        let durs = linspace(t0 - st, t0 + st, opts.points);
        let map = chevron(model, drive, &amps, &durs, initial, target, &opts.propagation)?;
        let (i, j) = map.argmax();
        let edge = |k: usize| k == 0 || k + 1 == opts.points;
        if level == 0 && (edge(i) || edge(j)) {
            return Err(Error::NoInteriorMaximum);
        }
        let v = map.populations[i][j];
        if v > best {
            best = v;
            a0 = amps[i];
            t0 = durs[j];
        }
        maps.push(map);
        let shrink = 2.0 / (opts.points - 1) as f64;
        sa *= shrink;
        st *= shrink;
    }
    Ok((a0, t0, best))
}

#[allow(clippy::too_many_arguments)]
fn zoom_amplitude(
    model: &Model,
    drive: &GateDrive,
    a0: f64,
    span: f64,
    duration: f64,
    initial: [usize; 3],
    target: [usize; 3],
    opts: &RefineOptions,
    maps: &mut Vec<ChevronMap>,
) -> Result<(f64, f64)> {
    let (mut a0, mut sa) = (a0, span);
    let mut best = f64::MIN;
    for level in 0..opts.levels {
        let amps = linspace(a0 - sa, a0 + sa, opts.points);
        let map = chevron(model, drive, &amps, &[duration], initial, target, &opts.propagation)?;
        let (i, _) = map.argmax();
        if level == 0 && (i == 0 || i + 1 == opts.points) {
            return Err(Error::NoInteriorMaximum);
        }
        if map.populations[i][0] > best {
            best = map.populations[i][0];
            a0 = amps[i];
        }
        maps.push(map);
        sa *= 2.0 / (opts.points - 1) as f64;
    }
    Ok((a0, best))
}

/// Exchange rate on the gate transition at the spec's operating point,
/// fitted to a simulated population series over two periods of `g_guess`.
pub fn fit_gate_coupling(
    model: &Model,
    spec: &GateSpec,
    g_guess: f64,
    opts: &PropagationOptions,
) -> Result<ExchangeFit> {
    let (initial, target) = match spec.kind {
        GateKind::ISwap => ([1, 0, 0], [0, 0, 1]),
        _ => ([1, 0, 1], [2, 0, 0]),
    };
    if !(g_guess > 0.0) {
        return Err(Error::invalid("coupling guess", format!("{g_guess} GHz")));
    }
    let times = linspace(spec.ramp_ns.max(1.0), 1.0 / g_guess, 48);
    let durations: Vec<f64> = times.iter().map(|t| t + spec.ramp_ns).collect();
    let map = chevron(
        model,
        &spec.drive(model),
        &[spec.amplitude_phi0],
        &durations,
        initial,
        target,
        opts,
    )?;
    fit_exchange(&times, map.column(0))
}

/// Amplitude width 2g/|df̄2/dA| of the gate resonance, Φ0.
pub fn resonance_linewidth(model: &Model, spec: &GateSpec) -> Result<f64> {
    let a = spec.amplitude_phi0;
    let h = 1e-4;
    let f = |x: f64| average_and_excursion(&model.q2, &q2_pulse(model.bias[1], x, spec.mod_freq_ghz)).map(|v| v.0);
    let slope = (f(a + h)? - f((a - h).max(0.0))?) / (a + h - (a - h).max(0.0));
    let g = effective_coupling(spec.kind, model, spec.coupler_bias_phi0, a, spec.mod_freq_ghz, 5)?;
    if !(slope.abs() > 1e-9) {
        return Err(Error::Degenerate("resonance insensitive to amplitude".into()));
    }
    Ok(2.0 * g / slope.abs())
}

/// Refine an analytic operating point on simulated chevrons.
///
/// iSWAP maximizes |10⟩ → |01⟩ transfer over amplitude and duration. CZ20
/// first maximizes the |11⟩ → |20⟩ half cycle, doubles its interaction time
/// and then maximizes the |11⟩ return over amplitude.
pub fn refine_on_chevron(model: &Model, spec: &GateSpec, opts: &RefineOptions) -> Result<(GateSpec, Vec<ChevronMap>)> {
    let mut maps = Vec::new();
    let drive = spec.drive(model);
    let span = match opts.amplitude_span {
        Some(s) => s,
        None => 1.5 * resonance_linewidth(model, spec)?,
    };
    let mut out = *spec;
    match spec.kind {
        GateKind::ISwap => {
            let (a, t, _) = zoom_2d(
                model,
                &drive,
                (spec.amplitude_phi0, spec.duration_ns),
                span,
                [1, 0, 0],
                [0, 0, 1],
                opts,
                &mut maps,
            )?;
            out.amplitude_phi0 = a;
            out.duration_ns = t;
        }
        GateKind::Cz20 => {
            let half = spec.ramp_ns + spec.interaction_time() / 2.0;
            let half_opts = RefineOptions {
                duration_span: opts.duration_span * 2.0,
                ..*opts
            };
            let (a, t_half, _) = zoom_2d(
                model,
                &drive,
                (spec.amplitude_phi0, half),
                span,
                [1, 0, 1],
                [2, 0, 0],
                &half_opts,
                &mut maps,
            )?;
            let duration = spec.ramp_ns + 2.0 * (t_half - spec.ramp_ns);
            let (a, _) = zoom_amplitude(
                model,
                &drive,
                a,
                span / 2.0,
                duration,
                [1, 0, 1],
                [1, 0, 1],
                opts,
                &mut maps,
            )?;
            out.amplitude_phi0 = a;
            out.duration_ns = duration;
        }
        GateKind::Cz02 => return Err(Error::invalid("gate kind", "CZ02 is not calibrated")),
    }
    Ok((out, maps))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateReport {
    pub gate: GateKind,
    pub analytic: GateSpec,
    pub calibrated: GateSpec,
    pub resonance: Resonance,
    pub eps0: f64,
    pub g_eff_ghz: f64,
    pub collision_recommended_min_ghz: f64,
    pub collision_margin_ghz: f64,
    pub tau_times_g: f64,
    /// Rate fitted to the simulated exchange at the calibrated point.
    pub g_fit_ghz: Option<f64>,
    pub tau_times_g_fit: Option<f64>,
    pub leakage: f64,
    pub average_fidelity: f64,
    pub fsim: FSimFit,
    pub conditional_phase: f64,
    pub phase_error: f64,
    pub unitarity_error: f64,
    pub warnings: Vec<String>,
}

/// Subspace analysis of a simulated gate after virtual-Z correction.
#[derive(Clone, Debug, PartialEq)]
pub struct GateAnalysis {
    pub block: Matrix4<Complex64>,
    pub corrected: Matrix4<Complex64>,
    pub virtual_z: [f64; 2],
    pub ptm: ProcessTensor,
    pub average_fidelity: f64,
    pub fsim: FSimFit,
    /// arg of M11·M00 / (M01·M10) on the diagonal, or the fSim φ for iSWAP.
    pub conditional_phase: f64,
}

pub fn analyze_gate(kind: GateKind, u: &nalgebra::DMatrix<Complex64>, basis: &DressedBasis) -> Result<GateAnalysis> {
    let block = computational_block(u, basis);
    let (z1, z2) = extract_virtual_z(&block, &kind.ideal())?;
    let corrected = virtual_z_correct(&block, z1, z2);
    let ptm = ProcessTensor::from_operator(&corrected);
    let ideal = ProcessTensor::from_operator(&kind.ideal());
    let fsim = fit_fsim(&ptm);
    Ok(GateAnalysis {
        block,
        corrected,
        virtual_z: [z1, z2],
        average_fidelity: average_fidelity(&ptm, &ideal),
        conditional_phase: fsim.phi,
        ptm,
        fsim,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub spec: GateSpec,
    pub report: GateReport,
    pub analysis: GateAnalysis,
    pub chevrons: Vec<ChevronMap>,
}

/// Amplitude grid for the collision map: 0 to 1.1× the largest operating
/// amplitude of the iSWAP and CZ20 gates.
pub fn collision_grid(model: &Model, p: &DeviceParams, mod_freq: f64, points: usize) -> Result<Vec<f64>> {
    let mut top: f64 = 0.0;
    for kind in [GateKind::ISwap, GateKind::Cz20] {
        top = top.max(find_resonance_amplitude(kind, &model.q2, p, model.bias[1], mod_freq)?.amplitude);
    }
    Ok(linspace(0.0, 1.1 * top, points))
}

fn gate_config(kind: GateKind, cfg: &DeviceConfig) -> crate::device::GateConfig {
    match kind {
        GateKind::ISwap => cfg.gates.iswap,
        GateKind::Cz20 | GateKind::Cz02 => cfg.gates.cz20,
    }
}

/// Uncalibrated operating point from the resonance condition and the
/// modulated coupling, with that coupling in GHz.
pub fn analytic_spec(kind: GateKind, cfg: &DeviceConfig) -> Result<(GateSpec, f64)> {
    let gate = gate_config(kind, cfg);
    let model = cfg.model().stage("model")?;
    let p = model.at_coupler(gate.coupler_bias_phi0).stage("model")?;
    let fp = gate.mod_freq_ghz;
    let r = find_resonance_amplitude(kind, &model.q2, &p, model.bias[1], fp).stage("resonance")?;
    let g = effective_coupling(
        kind,
        &model,
        gate.coupler_bias_phi0,
        r.amplitude,
        fp,
        cfg.simulation.sideband_cutoff,
    )
    .stage("coupling")?;
    let tau = set_duration(kind, g).stage("duration")?;
    let spec = GateSpec {
        kind,
        amplitude_phi0: r.amplitude,
        mod_freq_ghz: fp,
        duration_ns: tau + cfg.simulation.ramp_ns,
        ramp_ns: cfg.simulation.ramp_ns,
        coupler_bias_phi0: gate.coupler_bias_phi0,
        virtual_z: [0.0, 0.0],
        resonance_residual_ghz: r.residual,
    };
    Ok((spec, g))
}

/// Full pipeline: resonance amplitude, collision check, duration from the
/// effective coupling, chevron refinement, propagation and virtual-Z
/// extraction.
pub fn calibrate_gate(kind: GateKind, cfg: &DeviceConfig, opts: &RefineOptions) -> Result<Calibration> {
    let gate = gate_config(kind, cfg);
    let model = cfg.model().stage("model")?;
    let p = model.at_coupler(gate.coupler_bias_phi0).stage("model")?;
    let fp = gate.mod_freq_ghz;
    let resonance = find_resonance_amplitude(kind, &model.q2, &p, model.bias[1], fp).stage("resonance")?;
    let grid = collision_grid(&model, &p, fp, 201).stage("collision map")?;
    let collisions = sideband_collision_map(&p, &model.q2, model.bias[1], &grid, cfg.simulation.guard_band_ghz)
        .stage("collision map")?;
    let mut warnings = Vec::new();
    if collisions.margin(fp) < 0.0 {
        warnings.push(format!(
            "modulation {fp} GHz below the recommended {:.4} GHz",
            collisions.recommended_min
        ));
    }
    let n_max = cfg.simulation.sideband_cutoff;
    let pulse = q2_pulse(model.bias[1], resonance.amplitude, fp);
    let modulated = modulated_couplings(&p, &pulse, &model.q2, n_max, Variant::Full).stage("coupling")?;
    warnings.extend(modulated.warnings.iter().cloned());
    let g_eff = match kind {
        GateKind::ISwap => modulated.g01_at(0).norm(),
        _ => modulated.g20_at(0).norm(),
    };
    let tau = set_duration(kind, g_eff).stage("duration")?;
    let ramp = cfg.simulation.ramp_ns;
    let analytic = GateSpec {
        kind,
        amplitude_phi0: resonance.amplitude,
        mod_freq_ghz: fp,
        duration_ns: tau + ramp,
        ramp_ns: ramp,
        coupler_bias_phi0: gate.coupler_bias_phi0,
        virtual_z: [0.0, 0.0],
        resonance_residual_ghz: resonance.residual,
    };
    let popts = RefineOptions {
        propagation: PropagationOptions {
            dt: cfg.simulation.dt_ns,
            ..opts.propagation
        },
        ..*opts
    };
    let (mut spec, chevrons) = refine_on_chevron(&model, &analytic, &popts).stage("refine")?;
    let prop = propagate(&model, &spec.drive(&model), &popts.propagation).stage("propagate")?;
    let g_fit = match fit_gate_coupling(&model, &spec, g_eff, &popts.propagation) {
        Ok(f) => Some(f.coupling),
        Err(e) => {
            warnings.push(format!("exchange fit: {e}"));
            None
        }
    };
    let basis = DressedBasis::new(&model.idle().stage("model")?, popts.propagation.form);
    let analysis = analyze_gate(kind, &prop.unitary, &basis).stage("virtual-z")?;
    spec.virtual_z = analysis.virtual_z;
    let target_phase = match kind {
        GateKind::ISwap => 0.0,
        _ => std::f64::consts::PI,
    };
    let dphi = analysis.conditional_phase - target_phase;
    let report = GateReport {
        gate: kind,
        analytic,
        calibrated: spec,
        resonance,
        eps0: modulated.weights.get(0).norm(),
        g_eff_ghz: g_eff,
        collision_recommended_min_ghz: collisions.recommended_min,
        collision_margin_ghz: collisions.margin(fp),
        tau_times_g: spec.interaction_time() * g_eff,
        g_fit_ghz: g_fit,
        tau_times_g_fit: g_fit.map(|g| spec.interaction_time() * g),
        leakage: analysis.ptm.leakage,
        average_fidelity: analysis.average_fidelity,
        fsim: analysis.fsim.clone(),
        conditional_phase: analysis.conditional_phase,
        phase_error: phase_error(dphi),
        unitarity_error: prop.unitarity_error,
        warnings,
    };
    Ok(Calibration {
        spec,
        report,
        analysis,
        chevrons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        DeviceConfig::bundled().model().unwrap()
    }

    #[test]
    fn resonant_qubits_need_no_amplitude() {
        let m = model();
        let mut p = m.idle().unwrap();
        p.f1 = p.f2;
        let r = find_resonance_amplitude(GateKind::ISwap, &m.q2, &p, 0.0, 0.3).unwrap();
        assert_eq!(r.amplitude, 0.0);
    }

    #[test]
    fn cz02_is_unreachable() {
        let m = model();
        let p = m.idle().unwrap();
        let err = find_resonance_amplitude(GateKind::Cz02, &m.q2, &p, 0.0, 0.3).unwrap_err();
        assert!(err.to_string().contains("resonance unreachable"), "{err}");
    }

    #[test]
    fn iswap_resonance_residual_and_excursion() {
        let m = model();
        let p = m.idle().unwrap();
        let r = find_resonance_amplitude(GateKind::ISwap, &m.q2, &p, 0.0, 0.3).unwrap();
        assert!(r.residual.abs() < RESONANCE_TOL);
        assert!(r.amplitude > 0.0 && r.amplitude < 0.5);
        assert!((r.f2_avg - p.f1).abs() < RESONANCE_TOL);
        // Same root again.
        let again = find_resonance_amplitude(GateKind::ISwap, &m.q2, &p, 0.0, 0.3).unwrap();
        assert_eq!(r, again);
        let cz = find_resonance_amplitude(GateKind::Cz20, &m.q2, &p, 0.0, 0.28).unwrap();
        assert!(cz.amplitude > r.amplitude);
    }

    #[test]
    fn collision_zero_at_iswap_resonance() {
        let m = model();
        let p = m.idle().unwrap();
        let r = find_resonance_amplitude(GateKind::ISwap, &m.q2, &p, 0.0, 0.3).unwrap();
        let map = sideband_collision_map(&p, &m.q2, 0.0, &[0.0, r.amplitude], 0.02).unwrap();
        assert!(map.iswap[1] < 1e-6);
        assert!(sideband_collision_map(&p, &m.q2, 0.0, &[], 0.02).is_err());
        let worst = map
            .iswap
            .iter()
            .chain(&map.cz02)
            .chain(&map.cz20)
            .cloned()
            .fold(0.0, f64::max);
        assert!((map.recommended_min - worst - 0.02).abs() < 1e-15);
    }

    #[test]
    fn duration_scaling() {
        assert!((set_duration(GateKind::ISwap, 0.00568).unwrap() - 44.014).abs() < 1e-3);
        let a = set_duration(GateKind::Cz20, 0.004).unwrap();
        let b = set_duration(GateKind::Cz20, 0.008).unwrap();
        assert!((a / b - 2.0).abs() < 1e-15);
        assert!((set_duration(GateKind::Cz20, 1.0 / 248.0).unwrap() - 124.0).abs() < 1e-12);
        assert!(set_duration(GateKind::ISwap, 0.0).is_err());
        assert!(set_duration(GateKind::ISwap, -1.0).is_err());
    }

    #[test]
    fn offset_grid_has_no_interior_maximum() {
        let m = model();
        let cfg = DeviceConfig::bundled();
        let p = m.at_coupler(cfg.gates.iswap.coupler_bias_phi0).unwrap();
        let r = find_resonance_amplitude(GateKind::ISwap, &m.q2, &p, 0.0, 0.3).unwrap();
        let spec = GateSpec {
            kind: GateKind::ISwap,
            amplitude_phi0: r.amplitude + 0.02,
            mod_freq_ghz: 0.3,
            duration_ns: 30.0,
            ramp_ns: 5.0,
            coupler_bias_phi0: cfg.gates.iswap.coupler_bias_phi0,
            virtual_z: [0.0; 2],
            resonance_residual_ghz: 0.0,
        };
        let opts = RefineOptions {
            levels: 1,
            points: 3,
            amplitude_span: Some(0.005),
            duration_span: 2.0,
            ..Default::default()
        };
        assert!(matches!(
            refine_on_chevron(&m, &spec, &opts),
            Err(Error::NoInteriorMaximum)
        ));
    }

    #[test]
    fn gate_kind_parsing() {
        assert_eq!("iSWAP".parse::<GateKind>().unwrap(), GateKind::ISwap);
        assert_eq!("cz".parse::<GateKind>().unwrap(), GateKind::Cz20);
        assert!("cnot".parse::<GateKind>().is_err());
    }
}
