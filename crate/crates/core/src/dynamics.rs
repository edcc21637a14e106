//! Time-domain propagation of the three-body system under flux pulses,
//! chevron scans and exchange-oscillation fits.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::device::Model;
use crate::effective::{conserved_blocks, fill_hamiltonian, index, CouplingForm, DIM};
use crate::error::{Error, Result};
use crate::fluxcontrol::{FluxLine, FluxPulse};
use crate::numeric::levenberg_marquardt;
use crate::spectrum::DeviceParams;

pub const UNITARITY_TOL: f64 = 1e-8;

/// Flux pulses on q2 and the coupler; q1 stays at its bias.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GateDrive {
    pub q2: FluxPulse,
    pub coupler: FluxPulse,
}

impl GateDrive {
    /// q2 modulated about its bias while the coupler steps from its bias to
    /// `coupler_bias`, both with the same edges.
    pub fn parametric(
        model: &Model,
        amplitude: f64,
        mod_freq: f64,
        coupler_bias: f64,
        duration: f64,
        ramp: f64,
    ) -> Self {
        GateDrive {
            q2: FluxPulse::modulated(FluxLine::Q2, model.bias[1], amplitude, mod_freq, duration, ramp),
            coupler: FluxPulse::step(
                FluxLine::Coupler,
                model.bias[2],
                coupler_bias - model.bias[2],
                duration,
                ramp,
            ),
        }
    }

    pub fn duration(&self) -> f64 {
        self.q2.duration
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.q2.duration = duration;
        self.coupler.duration = duration;
        self
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.q2.amplitude = amplitude;
        self
    }

    fn validate(&self) -> Result<()> {
        self.q2.validate()?;
        self.coupler.validate()?;
        if (self.q2.duration - self.coupler.duration).abs() > 1e-12 {
            return Err(Error::invalid(
                "drive",
                "q2 and coupler pulses must have equal durations",
            ));
        }
        Ok(())
    }

    /// Instantaneous parameters. q2's anharmonicity is held at its bias value.
    pub fn params_at(&self, model: &Model, eta2: f64, t: f64) -> Result<DeviceParams> {
        let mut p = model.params([model.bias[0], self.q2.value(t), self.coupler.value(t)])?;
        p.eta2 = eta2;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationOptions {
    /// Step in ns; `None` means 1/(40·fc) at the idle point.
    pub dt: Option<f64>,
    pub form: CouplingForm,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            dt: None,
            form: CouplingForm::Full,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<Complex64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Propagation {
    pub unitary: DMatrix<Complex64>,
    pub duration: f64,
    pub dt: f64,
    pub steps: usize,
    /// max |U†U − 1|.
    pub unitarity_error: f64,
    pub trajectory: Option<Trajectory>,
}

impl Propagation {
    pub fn apply(&self, psi: &DVector<Complex64>) -> DVector<Complex64> {
        &self.unitary * psi
    }
}

/// Default step: 1/(40·fc) at the idle point.
pub fn default_dt(idle: &DeviceParams) -> f64 {
    1.0 / (40.0 * idle.f1.max(idle.f2).max(idle.fc))
}

fn check_dt(dt: f64, p: &DeviceParams) -> Result<()> {
    let fmax = p.f1.max(p.f2).max(p.fc);
    if !(dt > 0.0) || dt > 1.0 / (20.0 * fmax) {
        return Err(Error::invalid(
            "time step",
            format!("dt = {dt} ns does not resolve {fmax:.3} GHz (need dt <= 1/(20 f))"),
        ));
    }
    Ok(())
}

/// exp(−i·2π·H·dt) on each block, from one real symmetric eigendecomposition
/// per block.
fn block_factors(h: &DMatrix<f64>, blocks: &[Vec<usize>], dt: f64) -> Vec<DMatrix<Complex64>> {
    blocks
        .iter()
        .map(|idx| {
            let n = idx.len();
            let sub = DMatrix::from_fn(n, n, |r, c| h[(idx[r], idx[c])]);
            let eig = sub.symmetric_eigen();
            let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
            let mut scaled = v.clone();
            for (k, w) in eig.eigenvalues.iter().enumerate() {
                let ph = Complex64::from_polar(1.0, -2.0 * PI * w * dt);
                for r in 0..n {
                    scaled[(r, k)] *= ph;
                }
            }
            scaled * v.transpose()
        })
        .collect()
}

/// Midpoint steps on the global grid t_k = k·dt from step `k0` up to `t_end`,
/// with a shortened final step. `apply` receives each step's block factors.
fn advance<H, A>(h_at: &H, form: CouplingForm, dt: f64, k0: usize, t_end: f64, mut apply: A) -> Result<usize>
where
    H: Fn(f64) -> Result<DeviceParams>,
    A: FnMut(Vec<DMatrix<Complex64>>),
{
    let blocks = conserved_blocks(form);
    let mut h = DMatrix::zeros(DIM, DIM);
    let mut k = k0;
    let mut steps = 0;
    loop {
        let t0 = k as f64 * dt;
        if t_end - t0 <= 1e-9 * dt {
            break;
        }
        let t1 = ((k + 1) as f64 * dt).min(t_end);
        let p = h_at(0.5 * (t0 + t1))?;
        fill_hamiltonian(&p, form, &mut h);
        apply(block_factors(&h, &blocks, t1 - t0));
        k += 1;
        steps += 1;
    }
    Ok(steps)
}

fn unitarity_error(u: &DMatrix<Complex64>) -> f64 {
    let g = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for r in 0..g.nrows() {
        for c in 0..g.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((g[(r, c)] - target).norm());
        }
    }
    worst
}

/// Propagate under a time-dependent Hamiltonian given by its parameters
/// h_at(t) over [0, duration].
pub fn propagate_params<H>(
    h_at: H,
    duration: f64,
    dt: f64,
    form: CouplingForm,
    record: Option<&DVector<Complex64>>,
) -> Result<Propagation>
where
    H: Fn(f64) -> Result<DeviceParams>,
{
    if !(duration >= 0.0) || !(dt > 0.0) {
        return Err(Error::invalid("propagation", "need duration >= 0 and dt > 0"));
    }
    let blocks = conserved_blocks(form);
    let mut ub: Vec<DMatrix<Complex64>> = blocks.iter().map(|b| DMatrix::identity(b.len(), b.len())).collect();
    let mut trajectory = record.map(|psi| Trajectory {
        times: vec![0.0],
        states: vec![psi.clone()],
    });
    let mut t = 0.0;
    let steps = advance(&h_at, form, dt, 0, duration, |factors| {
        for (u, w) in ub.iter_mut().zip(&factors) {
            *u = w * &*u;
        }
        t = (t + dt).min(duration);
        if let (Some(tr), Some(psi0)) = (trajectory.as_mut(), record) {
            tr.times.push(t);
            tr.states.push(assemble(&blocks, &ub) * psi0);
        }
    })?;
    let unitary = assemble(&blocks, &ub);
    let err = unitarity_error(&unitary);
    if err > UNITARITY_TOL {
        return Err(Error::UnitarityDrift {
            drift: err,
            tol: UNITARITY_TOL,
        });
    }
    Ok(Propagation {
        unitary,
        duration,
        dt,
        steps,
        unitarity_error: err,
        trajectory,
    })
}

fn assemble(blocks: &[Vec<usize>], ub: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    let mut u = DMatrix::zeros(DIM, DIM);
    for (idx, b) in blocks.iter().zip(ub) {
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                u[(i, j)] = b[(r, c)];
            }
        }
    }
    u
}

/// Propagate the device under `drive` in the lab frame.
pub fn propagate(model: &Model, drive: &GateDrive, opts: &PropagationOptions) -> Result<Propagation> {
    drive.validate()?;
    let idle = model.idle()?;
    let dt = opts.dt.unwrap_or_else(|| default_dt(&idle));
    check_dt(dt, &idle)?;
    propagate_params(
        |t| drive.params_at(model, idle.eta2, t),
        drive.duration(),
        dt,
        opts.form,
        None,
    )
}

/// Eigenvectors of the idle Hamiltonian labeled by the bare state they
/// overlap most, with the bare component made positive.
#[derive(Clone, Debug, PartialEq)]
pub struct DressedBasis {
    pub energies: DVector<f64>,
    /// Column `index(n1, nc, n2)` is the dressed |n1 nc n2⟩.
    pub vectors: DMatrix<f64>,
}

impl DressedBasis {
    pub fn new(p: &DeviceParams, form: CouplingForm) -> Self {
        let mut h = DMatrix::zeros(DIM, DIM);
        fill_hamiltonian(p, form, &mut h);
        let eig = h.symmetric_eigen();
        // Assign greedily by decreasing overlap so labels stay unique.
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(DIM * DIM);
        for bare in 0..DIM {
            for k in 0..DIM {
                pairs.push((eig.eigenvectors[(bare, k)].powi(2), bare, k));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut taken_bare = [false; DIM];
        let mut taken_eig = [false; DIM];
        let mut energies = DVector::zeros(DIM);
        let mut vectors = DMatrix::zeros(DIM, DIM);
        for (_, bare, k) in pairs {
            if taken_bare[bare] || taken_eig[k] {
                continue;
            }
            taken_bare[bare] = true;
            taken_eig[k] = true;
            let sign = eig.eigenvectors[(bare, k)].signum();
            vectors.set_column(bare, &(eig.eigenvectors.column(k) * sign));
            energies[bare] = eig.eigenvalues[k];
        }
        DressedBasis { energies, vectors }
    }

    pub fn state(&self, n: [usize; 3]) -> DVector<Complex64> {
        self.vectors
            .column(index(n[0], n[1], n[2]))
            .map(|x| Complex64::new(x, 0.0))
    }

    /// |⟨n|ψ⟩|² for the dressed state n.
    pub fn population(&self, n: [usize; 3], psi: &DVector<Complex64>) -> f64 {
        let v = self.vectors.column(index(n[0], n[1], n[2]));
        v.iter()
            .zip(psi.iter())
            .map(|(a, b)| b * *a)
            .sum::<Complex64>()
            .norm_sqr()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChevronMap {
    pub amplitudes: Vec<f64>,
    pub durations: Vec<f64>,
    pub initial: [usize; 3],
    pub target: [usize; 3],
    /// Target population, one row per amplitude and one column per duration.
    pub populations: Vec<Vec<f64>>,
}

impl ChevronMap {
    pub fn column(&self, amp_index: usize) -> &[f64] {
        &self.populations[amp_index]
    }

    /// Grid indices of the largest population; ties go to the smaller
    /// amplitude.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.populations.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > self.populations[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("amplitude_phi0");
        for d in &self.durations {
            out.push_str(&format!(",{d}"));
        }
        out.push('\n');
        for (a, row) in self.amplitudes.iter().zip(&self.populations) {
            out.push_str(&format!("{a}"));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Dressed populations of `target` after starting in dressed `initial`, over
/// q2 modulation amplitudes and pulse durations. `template` fixes everything
/// else. Each amplitude runs one propagation with the shared flat top
/// checkpointed before every ramp-down.
pub fn chevron(
    model: &Model,
    template: &GateDrive,
    amplitudes: &[f64],
    durations: &[f64],
    initial: [usize; 3],
    target: [usize; 3],
    opts: &PropagationOptions,
) -> Result<ChevronMap> {
    if amplitudes.is_empty() || durations.is_empty() {
        return Err(Error::invalid("chevron grid", "grids must be nonempty"));
    }
    let idle = model.idle()?;
    let dt = opts.dt.unwrap_or_else(|| default_dt(&idle));
    check_dt(dt, &idle)?;
    let ramp = template.q2.ramp;
    for &d in durations {
        template.with_duration(d).validate()?;
    }
    let basis = DressedBasis::new(&idle, opts.form);
    let psi0 = basis.state(initial);
    let blocks = conserved_blocks(opts.form);
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| durations[a].total_cmp(&durations[b]));
    let t_max = durations[order[order.len() - 1]];

    let rows = amplitudes
        .par_iter()
        .map(|&amp| -> Result<Vec<f64>> {
            let long = template.with_amplitude(amp).with_duration(t_max);
            let h_long = |t: f64| long.params_at(model, idle.eta2, t);
            let mut psi = psi0.clone();
            let mut k = 0usize;
            let mut row = vec![0.0; durations.len()];
            for &j in &order {
                let d = durations[j];
                let k_ck = (((d - ramp) / dt).floor().max(0.0)) as usize;
                if k_ck > k {
                    let stop = k_ck as f64 * dt;
                    k += advance(&h_long, opts.form, dt, k, stop, |f| apply_blocks(&blocks, &f, &mut psi))?;
                }
                let short = template.with_amplitude(amp).with_duration(d);
                let h_short = |t: f64| short.params_at(model, idle.eta2, t);
                let mut tail = psi.clone();
                advance(&h_short, opts.form, dt, k, d, |f| apply_blocks(&blocks, &f, &mut tail))?;
                row[j] = basis.population(target, &tail);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChevronMap {
        amplitudes: amplitudes.to_vec(),
        durations: durations.to_vec(),
        initial,
        target,
        populations: rows,
    })
}

fn apply_blocks(blocks: &[Vec<usize>], factors: &[DMatrix<Complex64>], psi: &mut DVector<Complex64>) {
    for (idx, w) in blocks.iter().zip(factors) {
        if idx.iter().all(|&i| psi[i] == Complex64::new(0.0, 0.0)) {
            continue;
        }
        let sub = DVector::from_fn(idx.len(), |r, _| psi[idx[r]]);
        let out = w * sub;
        for (r, &i) in idx.iter().enumerate() {
            psi[i] = out[r];
        }
    }
}

/// Fit of A·e^{−γt}·cos(2π·2g·t + φ) + B.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExchangeFit {
    /// Exchange coupling g in GHz; the population oscillates at 2g.
    pub coupling: f64,
    pub decay: f64,
    pub phase: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub residual: f64,
}

fn exchange_model(p: &[f64], t: f64) -> f64 {
    p[0] * (-p[1] * t).exp() * (2.0 * PI * 2.0 * p[2] * t + p[3]).cos() + p[4]
}

/// Linear least squares of a·cos + b·sin + c at one frequency; returns the
/// residual sum of squares and (a, b, c).
fn linear_fit(times: &[f64], y: &[f64], f: f64) -> (f64, [f64; 3]) {
    let m = DMatrix::from_fn(times.len(), 3, |r, c| {
        let x = 2.0 * PI * f * times[r];
        match c {
            0 => x.cos(),
            1 => x.sin(),
            _ => 1.0,
        }
    });
    let rhs = DVector::from_column_slice(y);
    let sol = (m.transpose() * &m)
        .lu()
        .solve(&(m.transpose() * &rhs))
        .unwrap_or_else(|| DVector::zeros(3));
    let rss = (&m * &sol - rhs).norm_squared();
    (rss, [sol[0], sol[1], sol[2]])
}

/// Fit a population time series to a decaying cosine.
pub fn fit_exchange(times: &[f64], populations: &[f64]) -> Result<ExchangeFit> {
    if times.len() != populations.len() || times.len() < 8 {
        return Err(Error::invalid(
            "exchange fit",
            "need at least 8 samples of equal length",
        ));
    }
    let mean = populations.iter().sum::<f64>() / populations.len() as f64;
    let spread = populations.iter().map(|y| (y - mean).abs()).fold(0.0, f64::max);
    if spread < 1e-9 {
        return Err(Error::Degenerate("population series has no contrast".into()));
    }
    let span = times.iter().cloned().fold(f64::MIN, f64::max) - times.iter().cloned().fold(f64::MAX, f64::min);
    let min_gap = times.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::MAX, f64::min);
    let nyquist = 0.5 / min_gap;
    let df = 1.0 / (16.0 * span);
    let mut best = (f64::MAX, 0.0, [0.0; 3]);
    let mut f = 0.5 / span;
    while f <= nyquist {
        let (rss, c) = linear_fit(times, populations, f);
        if rss < best.0 {
            best = (rss, f, c);
        }
        f += df;
    }
    let (_, f0, [a, b, c]) = best;
    let amp = a.hypot(b);
    let phase = (-b).atan2(a);
    let p0 = [amp, 0.01 / span, f0 / 2.0, phase, c];
    let out = levenberg_marquardt(
        |p| {
            times
                .iter()
                .zip(populations)
                .map(|(&t, &y)| exchange_model(p, t) - y)
                .collect()
        },
        &p0,
        200,
    );
    let scale = populations.len() as f64;
    if !out.converged || !(out.residual_norm / scale.sqrt() < 0.1 * spread) {
        return Err(Error::FitFailed {
            residual: out.residual_norm,
        });
    }
    let mut p = out.params;
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] += PI;
    }
    let phase = (p[3] + PI).rem_euclid(2.0 * PI) - PI;
    Ok(ExchangeFit {
        coupling: p[2],
        decay: p[1],
        phase,
        amplitude: p[0],
        offset: p[4],
        residual: out.residual_norm,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BiasPoint {
    pub coupler_bias: f64,
    pub amplitude: f64,
    pub fit: ExchangeFit,
}

/// Exchange coupling |10⟩ ↔ |01⟩ versus coupler bias. At each bias the q2
/// modulation amplitude comes from `amplitude_for(bias)`; a |10⟩ → |01⟩
/// time series over `durations` is fitted with [`fit_exchange`].
pub fn coupling_vs_bias<F>(
    model: &Model,
    template: &GateDrive,
    biases: &[f64],
    durations_for: F,
    amplitude_for: impl Fn(f64) -> Result<f64> + Sync,
    opts: &PropagationOptions,
) -> Result<Vec<BiasPoint>>
where
    F: Fn(f64) -> Vec<f64> + Sync,
{
    biases
        .iter()
        .map(|&bias| {
            let amplitude = amplitude_for(bias)?;
            let mut drive = *template;
            drive.coupler.amplitude = bias - model.bias[2];
            let durations = durations_for(bias);
            let map = chevron(model, &drive, &[amplitude], &durations, [1, 0, 0], [0, 0, 1], opts)?;
            let fit = fit_exchange(&durations, map.column(0))?;
            Ok(BiasPoint {
                coupler_bias: bias,
                amplitude,
                fit,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceConfig;
    use crate::numeric::linspace;

    fn bare(f1: f64, f2: f64, fc: f64, g12: f64) -> DeviceParams {
        DeviceParams {
            f1,
            f2,
            fc,
            eta1: 0.2,
            eta2: 0.2,
            etac: 0.3,
            g1c: 0.0,
            g2c: 0.0,
            g12,
            xi: [0.0; 3],
        }
    }

    #[test]
    fn uncoupled_gives_diagonal_phases() {
        let p = bare(4.0, 4.3, 6.0, 0.0);
        let t = 3.7;
        let prop = propagate_params(|_| Ok(p), t, 0.004, CouplingForm::Full, None).unwrap();
        let mut h = DMatrix::zeros(DIM, DIM);
        fill_hamiltonian(&p, CouplingForm::Full, &mut h);
        for i in 0..DIM {
            for j in 0..DIM {
                let want = if i == j {
                    Complex64::from_polar(1.0, -2.0 * PI * h[(i, i)] * t)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!((prop.unitary[(i, j)] - want).norm() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn resonant_exchange_follows_rabi_formula() {
        let g = 0.005;
        let p = bare(4.0, 4.0, 6.0, g);
        let psi0 = DVector::from_fn(DIM, |i, _| {
            Complex64::new(if i == index(1, 0, 0) { 1.0 } else { 0.0 }, 0.0)
        });
        let t = 1.0 / (4.0 * g);
        let prop = propagate_params(|_| Ok(p), t, 0.005, CouplingForm::Rwa, Some(&psi0)).unwrap();
        let tr = prop.trajectory.unwrap();
        for (time, psi) in tr.times.iter().zip(&tr.states).step_by(97) {
            let want = (2.0 * PI * g * time).sin().powi(2);
            assert!((psi[index(0, 0, 1)].norm_sqr() - want).abs() < 1e-9, "t={time}");
        }
        assert!((prop.unitary[(index(0, 0, 1), index(1, 0, 0))].norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rwa_conserves_excitations() {
        let m = DeviceConfig::bundled().model().unwrap();
        let drive = GateDrive::parametric(&m, 0.15, 0.3, 0.25, 12.0, 3.0);
        let opts = PropagationOptions {
            form: CouplingForm::Rwa,
            ..Default::default()
        };
        let prop = propagate(&m, &drive, &opts).unwrap();
        for i in 0..DIM {
            for j in 0..DIM {
                let ni: usize = crate::effective::occupations(i).iter().sum();
                let nj: usize = crate::effective::occupations(j).iter().sum();
                if ni != nj {
                    assert_eq!(prop.unitary[(i, j)].norm(), 0.0);
                }
            }
        }
        assert!(prop.unitarity_error < 1e-10);
    }

    #[test]
    fn step_halving_is_second_order() {
        let m = DeviceConfig::bundled().model().unwrap();
        let drive = GateDrive::parametric(&m, 0.15, 0.3, 0.25, 8.0, 2.0);
        let run = |dt: f64| {
            propagate(
                &m,
                &drive,
                &PropagationOptions {
                    dt: Some(dt),
                    ..Default::default()
                },
            )
            .unwrap()
            .unitary
        };
        let dt = 8.0 / 1024.0;
        let (a, b, c) = (run(dt), run(dt / 2.0), run(dt / 4.0));
        let dist =
            |x: &DMatrix<Complex64>, y: &DMatrix<Complex64>| (x - y).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let ratio = dist(&a, &b) / dist(&b, &c);
        assert!((ratio - 4.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn coarse_step_is_rejected() {
        let m = DeviceConfig::bundled().model().unwrap();
        let drive = GateDrive::parametric(&m, 0.1, 0.3, 0.2, 10.0, 2.0);
        let opts = PropagationOptions {
            dt: Some(0.05),
            ..Default::default()
        };
        assert!(matches!(propagate(&m, &drive, &opts), Err(Error::Invalid { .. })));
    }

    #[test]
    fn chevron_matches_direct_propagation() {
        let m = DeviceConfig::bundled().model().unwrap();
        let template = GateDrive::parametric(&m, 0.15, 0.3, 0.25, 20.0, 2.0);
        let durations = [6.0, 9.5, 13.25];
        let map = chevron(
            &m,
            &template,
            &[0.12, 0.15],
            &durations,
            [1, 0, 0],
            [0, 0, 1],
            &Default::default(),
        )
        .unwrap();
        let basis = DressedBasis::new(&m.idle().unwrap(), CouplingForm::Full);
        for (i, &a) in [0.12, 0.15].iter().enumerate() {
            for (j, &d) in durations.iter().enumerate() {
                let drive = template.with_amplitude(a).with_duration(d);
                let u = propagate(&m, &drive, &Default::default()).unwrap();
                let psi = u.apply(&basis.state([1, 0, 0]));
                let want = basis.population([0, 0, 1], &psi);
                assert!((map.populations[i][j] - want).abs() < 1e-12, "{i} {j}");
            }
        }
    }

    #[test]
    fn dressed_basis_is_orthonormal_and_labeled() {
        let p = DeviceConfig::bundled().model().unwrap().idle().unwrap();
        let b = DressedBasis::new(&p, CouplingForm::Full);
        let g = b.vectors.transpose() * &b.vectors;
        assert!((g - DMatrix::identity(DIM, DIM)).amax() < 1e-12);
        for i in 0..DIM {
            assert!(b.vectors[(i, i)] > 0.5);
        }
    }

    fn synthetic(g: f64, gamma: f64, phase: f64) -> (Vec<f64>, Vec<f64>) {
        let t = linspace(0.0, 400.0, 161);
        let y = t
            .iter()
            .map(|&t| 0.48 * (-gamma * t).exp() * (2.0 * PI * 2.0 * g * t + phase).cos() + 0.5)
            .collect();
        (t, y)
    }

    #[test]
    fn exchange_fit_round_trip() {
        let (t, y) = synthetic(0.00568, 0.002, 0.3);
        let fit = fit_exchange(&t, &y).unwrap();
        assert!((fit.coupling / 0.00568 - 1.0).abs() < 1e-3);
        assert!((fit.decay - 0.002).abs() < 1e-6);
        assert!((fit.phase - 0.3).abs() < 1e-4);
    }

    #[test]
    fn exchange_fit_without_decay() {
        let (t, y) = synthetic(0.004, 0.0, -2.0);
        let fit = fit_exchange(&t, &y).unwrap();
        assert!(fit.decay.abs() < 1e-6);
        assert!((fit.coupling - 0.004).abs() < 1e-8);
    }

    #[test]
    fn flat_series_is_degenerate() {
        let t = linspace(0.0, 10.0, 20);
        let y = vec![0.3; 20];
        assert!(matches!(fit_exchange(&t, &y), Err(Error::Degenerate(_))));
    }
}
