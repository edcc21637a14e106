//! Three-level three-body Hamiltonian and the static and flux-modulated
//! effective qubit-qubit couplings.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::SQRT_2;

use crate::device::Model;
use crate::error::{Error, Result};
use crate::fluxcontrol::FluxPulse;
use crate::numeric::brent_min;
use crate::spectrum::{flux_phase, level_energies, DeviceParams, TransmonSpec};

pub const LEVELS: usize = 3;
pub const DIM: usize = 27;

/// Index of |n1 nc n2⟩ in the 27-dimensional product basis.
pub const fn index(n1: usize, nc: usize, n2: usize) -> usize {
    9 * n1 + 3 * nc + n2
}

/// Occupations (n1, nc, n2) of basis state `i`.
pub const fn occupations(i: usize) -> [usize; 3] {
    [i / 9, (i / 3) % 3, i % 3]
}

pub fn basis_label(i: usize) -> String {
    let [a, b, c] = occupations(i);
    format!("|{a}{b}{c}>")
}

/// Coupling operators: `Full` uses charge coupling (a + a†)(b + b†), `Rwa`
/// keeps only the excitation-conserving part a†b + ab†.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum CouplingForm {
    #[default]
    Full,
    Rwa,
}

/// Real symmetric Hamiltonian in GHz on |n1 nc n2⟩, n ∈ {0, 1, 2}.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreeBodyHamiltonian {
    pub matrix: DMatrix<f64>,
    pub form: CouplingForm,
}

impl ThreeBodyHamiltonian {
    pub fn element(&self, bra: [usize; 3], ket: [usize; 3]) -> f64 {
        self.matrix[(index(bra[0], bra[1], bra[2]), index(ket[0], ket[1], ket[2]))]
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eigen(&self) -> (DVector<f64>, DMatrix<f64>) {
        sorted_eigen(self.matrix.clone())
    }
}

pub(crate) fn sorted_eigen(m: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn level(f: f64, eta: f64, n: usize) -> f64 {
    match n {
        0 => 0.0,
        1 => f,
        _ => 2.0 * f - eta,
    }
}

/// Write the Hamiltonian into `h`, which must be 27×27.
pub fn fill_hamiltonian(p: &DeviceParams, form: CouplingForm, h: &mut DMatrix<f64>) {
    h.fill(0.0);
    let pairs = [(0usize, 1usize, p.g1c), (1, 2, p.g2c), (0, 2, p.g12)];
    for i in 0..DIM {
        let n = occupations(i);
        h[(i, i)] = level(p.f1, p.eta1, n[0]) + level(p.fc, p.etac, n[1]) + level(p.f2, p.eta2, n[2]);
        for &(a, b, g) in &pairs {
            // Shifts (da, db) of the two occupations, with a†b, ab†, a†b†, ab.
            let moves: &[(i32, i32)] = match form {
                CouplingForm::Full => &[(1, -1), (-1, 1), (1, 1), (-1, -1)],
                CouplingForm::Rwa => &[(1, -1), (-1, 1)],
            };
            for &(da, db) in moves {
                let na = n[a] as i32 + da;
                let nb = n[b] as i32 + db;
                if !(0..LEVELS as i32).contains(&na) || !(0..LEVELS as i32).contains(&nb) {
                    continue;
                }
                let amp = |from: usize, to: i32| (from.max(to as usize) as f64).sqrt();
                let mut m = n;
                m[a] = na as usize;
                m[b] = nb as usize;
                let j = index(m[0], m[1], m[2]);
                h[(j, i)] += g * amp(n[a], na) * amp(n[b], nb);
            }
        }
    }
}

pub fn build_hamiltonian(p: &DeviceParams, form: CouplingForm) -> ThreeBodyHamiltonian {
    let mut h = DMatrix::zeros(DIM, DIM);
    fill_hamiltonian(p, form, &mut h);
    ThreeBodyHamiltonian { matrix: h, form }
}

/// Basis indices grouped into blocks the Hamiltonian never connects:
/// excitation-number parity for `Full`, total excitation number for `Rwa`.
pub fn conserved_blocks(form: CouplingForm) -> Vec<Vec<usize>> {
    let key = |i: usize| -> usize {
        let n: usize = occupations(i).iter().sum();
        match form {
            CouplingForm::Full => n % 2,
            CouplingForm::Rwa => n,
        }
    };
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut keys: Vec<usize> = Vec::new();
    for i in 0..DIM {
        let k = key(i);
        match keys.iter().position(|&x| x == k) {
            Some(b) => blocks[b].push(i),
            None => {
                keys.push(k);
                blocks.push(vec![i]);
            }
        }
    }
    blocks
}

/// Whether counter-rotating 1/Σ terms are kept (`Full`) or dropped
/// (`MainText`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Variant {
    #[default]
    Full,
    MainText,
}

impl Variant {
    fn weight(self) -> f64 {
        match self {
            Variant::Full => 1.0,
            Variant::MainText => 0.0,
        }
    }
}

/// Second-order dispersive results, GHz.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StaticEffective {
    pub f01_1: f64,
    pub f01_2: f64,
    pub f02_1: f64,
    pub f02_2: f64,
    pub g01: f64,
    pub g02: f64,
    pub g20: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub warnings: Vec<String>,
}

const RESONANCE_TOL: f64 = 1e-6;

fn check_denominators(named: &[(&str, f64)]) -> Result<()> {
    for &(name, d) in named {
        if d.abs() < RESONANCE_TOL {
            return Err(Error::CouplerResonance {
                detail: format!("{name} = {d:.3e} GHz"),
            });
        }
    }
    Ok(())
}

fn dispersive_warnings(p: &DeviceParams, d1: f64, d2: f64) -> Vec<String> {
    let mut w = Vec::new();
    for (k, g, d) in [(1, p.g1c, d1), (2, p.g2c, d2)] {
        let r = g.abs() / d.abs();
        if r > 0.3 {
            w.push(format!(
                "g{k}c/|Δ{k}| = {r:.2} exceeds 0.3; dispersive expansion unreliable"
            ));
        }
    }
    w
}

pub fn static_couplings(p: &DeviceParams, variant: Variant) -> Result<StaticEffective> {
    let s = variant.weight();
    let d1 = p.fc - p.f1;
    let d2 = p.fc - p.f2;
    let s1 = p.fc + p.f1;
    let s2 = p.fc + p.f2;
    let mut named = vec![
        ("Δ1", d1),
        ("Δ2", d2),
        ("Δ1 + η1", d1 + p.eta1),
        ("Δ2 + η2", d2 + p.eta2),
    ];
    if variant == Variant::Full {
        named.extend([
            ("Σ1", s1),
            ("Σ2", s2),
            ("Σ1 − η1", s1 - p.eta1),
            ("Σ2 − η2", s2 - p.eta2),
        ]);
    }
    check_denominators(&named)?;
    let inv = |x: f64| 1.0 / x;
    let gg = p.g1c * p.g2c;
    let g01 = p.g12 - gg / 2.0 * (inv(d1) + inv(d2) + s * (inv(s1) + inv(s2)));
    let g02 = SQRT_2 * p.g12 - gg / SQRT_2 * (inv(d1) + inv(d2 + p.eta2) + s * (inv(s1) + inv(s2 - p.eta2)));
    let g20 = SQRT_2 * p.g12 - gg / SQRT_2 * (inv(d1 + p.eta1) + inv(d2) + s * (inv(s1 - p.eta1) + inv(s2)));
    let lamb = |g: f64, d: f64, sg: f64| g * g / d + s * g * g / sg;
    let lamb2 = |g: f64, d: f64, sg: f64, eta: f64| 2.0 * g * g / (d + eta) + s * 2.0 * g * g / (sg - eta);
    Ok(StaticEffective {
        f01_1: p.f1 + lamb(p.g1c, d1, s1),
        f01_2: p.f2 + lamb(p.g2c, d2, s2),
        f02_1: 2.0 * p.f1 - p.eta1 + lamb2(p.g1c, d1, s1, p.eta1),
        f02_2: 2.0 * p.f2 - p.eta2 + lamb2(p.g2c, d2, s2, p.eta2),
        g01,
        g02,
        g20,
        delta1: d1,
        delta2: d2,
        sigma1: s1,
        sigma2: s2,
        warnings: dispersive_warnings(p, d1, d2),
    })
}

/// Splitting between the two single-excitation qubit-like eigenstates when
/// q2 sits at `f2`.
fn single_excitation_gap(p: &DeviceParams, form: CouplingForm, f2: f64) -> f64 {
    let h = build_hamiltonian(&p.with_f2(f2), form);
    let (vals, vecs) = h.eigen();
    let (a, b) = (index(1, 0, 0), index(0, 0, 1));
    let mut w: Vec<(f64, usize)> = (0..DIM)
        .map(|k| (vecs[(a, k)].powi(2) + vecs[(b, k)].powi(2), k))
        .collect();
    w.sort_by(|x, y| y.0.total_cmp(&x.0));
    (vals[w[0].1] - vals[w[1].1]).abs()
}

/// Half the minimum splitting of the |100⟩/|001⟩ avoided crossing as f2
/// sweeps through f1.
pub fn exact_g01(p: &DeviceParams, form: CouplingForm) -> Result<f64> {
    let d = (p.fc - p.f1).abs().max(1e-3);
    let half = 0.02 + 2.0 * (p.g1c.powi(2) + p.g2c.powi(2)) / d;
    let (lo, hi) = (p.f1 - half, p.f1 + half);
    let (x, gap) = brent_min(|f2| single_excitation_gap(p, form, f2), lo, hi, 1e-12);
    let edge = 1e-6 * (hi - lo);
    if x - lo < edge || hi - x < edge {
        return Err(Error::NoCrossing { lo, hi });
    }
    Ok(gap / 2.0)
}

/// Per-sideband weights of the modulated qubit, indexed n = −N..=N.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SidebandWeights {
    pub n_max: usize,
    /// Frequency offset between neighbouring sidebands, GHz: 2·f_p at a
    /// sweet spot, f_p elsewhere.
    pub spacing: f64,
    pub f2_avg: f64,
    pub f2_excursion: f64,
    pub eps: Vec<Complex64>,
    /// ε_n including the flux dependence of g2c and g12 respectively.
    pub eps_2c: Vec<Complex64>,
    pub eps_12: Vec<Complex64>,
}

impl SidebandWeights {
    pub fn get(&self, n: i32) -> Complex64 {
        self.eps[(n + self.n_max as i32) as usize]
    }

    pub fn orders(&self) -> impl Iterator<Item = i32> {
        let n = self.n_max as i32;
        -n..=n
    }
}

struct PeriodSpectrum {
    avg: f64,
    excursion: f64,
    symmetric: bool,
    /// e^{−iθ(t_j)} on the sample grid.
    phase: Vec<Complex64>,
}

fn period_spectrum(freqs: &[f64], mod_freq: f64) -> PeriodSpectrum {
    let m = freqs.len();
    let avg = freqs.iter().sum::<f64>() / m as f64;
    let mut planner = FftPlanner::<f64>::new();
    let mut c: Vec<Complex64> = freqs.iter().map(|&f| Complex64::new(f - avg, 0.0)).collect();
    planner.plan_fft_forward(m).process(&mut c);
    for v in c.iter_mut() {
        *v /= m as f64;
    }
    let half = m / 2;
    let mut excursion = 0.0_f64;
    let mut odd = 0.0_f64;
    let mut all = 0.0_f64;
    for (k, v) in c.iter().enumerate().take(half).skip(1) {
        let a = 2.0 * v.norm();
        excursion = excursion.max(a);
        all = all.max(a);
        if k % 2 == 1 {
            odd = odd.max(a);
        }
    }
    let symmetric = odd <= 1e-9 * all.max(1e-300);
    // θ(t) = 2π∫₀ᵗ (f − f̄) = Σ_k c_k (e^{i2πk f_p t} − 1)/(i k f_p)
    let mut d = vec![Complex64::new(0.0, 0.0); m];
    let mut offset = Complex64::new(0.0, 0.0);
    for k in 1..m {
        if k == half {
            continue;
        }
        let kk = if k < half { k as f64 } else { k as f64 - m as f64 };
        d[k] = c[k] / Complex64::new(0.0, kk * mod_freq);
        offset += d[k];
    }
    planner.plan_fft_inverse(m).process(&mut d);
    let phase = d.iter().map(|v| Complex64::from_polar(1.0, -(v - offset).re)).collect();
    PeriodSpectrum {
        avg,
        excursion,
        symmetric,
        phase,
    }
}

/// (1/M)·Σ_j x_j e^{+i2πmj/M} for m in `harmonics`.
fn harmonics_of(x: &[Complex64], harmonics: &[i64]) -> Vec<Complex64> {
    let m = x.len();
    let mut buf = x.to_vec();
    FftPlanner::<f64>::new().plan_fft_inverse(m).process(&mut buf);
    harmonics
        .iter()
        .map(|&h| buf[h.rem_euclid(m as i64) as usize] / m as f64)
        .collect()
}

/// Ratio of an exchange coupling at q2's instantaneous EJ to its value at
/// the DC bias; `xi_partner` is ξ of the other mode.
fn coupling_ratio(ec: f64, ej: f64, ej_dc: f64, xi_partner: f64) -> f64 {
    let corr = |e: f64| 1.0 - ((2.0 * ec / e).sqrt() + xi_partner) / 8.0;
    (ej / ej_dc).powf(0.25) * corr(ej) / corr(ej_dc)
}

const QUAD_TOL: f64 = 1e-10;

/// Weights for a band given as flux ↦ (frequency, g2c ratio, g12 ratio).
fn weights_core<F>(point: F, pulse: &FluxPulse, n_max: usize) -> Result<SidebandWeights>
where
    F: Fn(f64) -> Result<(f64, f64, f64)>,
{
    if !(pulse.mod_freq > 0.0) {
        return Err(Error::invalid("modulation", "modulation frequency must be positive"));
    }
    let len = 2 * n_max + 1;
    if pulse.amplitude == 0.0 {
        let mut eps = vec![Complex64::new(0.0, 0.0); len];
        eps[n_max] = Complex64::new(1.0, 0.0);
        return Ok(SidebandWeights {
            n_max,
            spacing: 2.0 * pulse.mod_freq,
            f2_avg: point(pulse.phi_dc)?.0,
            f2_excursion: 0.0,
            eps_2c: eps.clone(),
            eps_12: eps.clone(),
            eps,
        });
    }
    let period = 1.0 / pulse.mod_freq;
    let eval = |m: usize| -> Result<SidebandWeights> {
        let samples = (0..m)
            .map(|j| point(pulse.flat_top(period * j as f64 / m as f64)))
            .collect::<Result<Vec<_>>>()?;
        let freqs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let spec = period_spectrum(&freqs, pulse.mod_freq);
        let stride: i64 = if spec.symmetric { 2 } else { 1 };
        let harmonics: Vec<i64> = (-(n_max as i64)..=n_max as i64).map(|n| n * stride).collect();
        let weighted = |r: &dyn Fn(&(f64, f64, f64)) -> f64| -> Vec<Complex64> {
            let x: Vec<Complex64> = spec.phase.iter().zip(&samples).map(|(p, s)| p * r(s)).collect();
            harmonics_of(&x, &harmonics)
        };
        Ok(SidebandWeights {
            n_max,
            spacing: stride as f64 * pulse.mod_freq,
            f2_avg: spec.avg,
            f2_excursion: spec.excursion,
            eps: harmonics_of(&spec.phase, &harmonics),
            eps_2c: weighted(&|s| s.1),
            eps_12: weighted(&|s| s.2),
        })
    };
    let mut m = 128;
    let mut prev = eval(m)?;
    loop {
        m *= 2;
        let next = eval(m)?;
        let change = prev
            .eps
            .iter()
            .zip(&next.eps)
            .map(|(a, b)| (a - b).norm())
            .fold((prev.f2_avg - next.f2_avg).abs(), f64::max);
        if change < QUAD_TOL {
            return Ok(next);
        }
        if m >= 32768 {
            return Err(Error::Quadrature {
                achieved: change,
                tol: QUAD_TOL,
            });
        }
        prev = next;
    }
}

fn weights_with(q2: &TransmonSpec, pulse: &FluxPulse, n_max: usize, xi: [f64; 3]) -> Result<SidebandWeights> {
    let ej_dc = q2.ej(flux_phase(pulse.phi_dc))?;
    let point = |phi: f64| -> Result<(f64, f64, f64)> {
        let l = level_energies(q2, flux_phase(phi))?;
        Ok((
            l.f01,
            coupling_ratio(q2.ec, l.ej, ej_dc, xi[2]),
            coupling_ratio(q2.ec, l.ej, ej_dc, xi[0]),
        ))
    };
    weights_core(point, pulse, n_max)
}

/// Fourier weights ε_n of e^{−i·2π∫(f2(t) − f̄2)dt} over one modulation
/// period, from the full flux-to-frequency chain.
pub fn numeric_fourier_weights(q2: &TransmonSpec, pulse: &FluxPulse, n_max: usize) -> Result<SidebandWeights> {
    weights_with(q2, pulse, n_max, [0.0; 3])
}

/// As [`numeric_fourier_weights`] for an arbitrary band f(Φ).
pub fn fourier_weights_of<F>(band: F, pulse: &FluxPulse, n_max: usize) -> Result<SidebandWeights>
where
    F: Fn(f64) -> Result<f64>,
{
    weights_core(|phi| Ok((band(phi)?, 1.0, 1.0)), pulse, n_max)
}

/// Small-modulation closed form ε_n ≈ J_n(f̃2/(2f_p)).
pub fn bessel_weights(excursion: f64, mod_freq: f64, n_max: usize) -> Vec<f64> {
    let x = excursion / (2.0 * mod_freq);
    (-(n_max as i32)..=n_max as i32)
        .map(|n| crate::numeric::bessel_j(n, x))
        .collect()
}

/// Time-averaged q2 frequency and the amplitude of its dominant harmonic
/// under the flat-top modulation, GHz.
pub fn average_and_excursion(q2: &TransmonSpec, pulse: &FluxPulse) -> Result<(f64, f64)> {
    average_and_excursion_of(|phi| Ok(level_energies(q2, flux_phase(phi))?.f01), pulse)
}

/// As [`average_and_excursion`] for an arbitrary band f(Φ).
pub fn average_and_excursion_of<F>(band: F, pulse: &FluxPulse) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    if pulse.amplitude == 0.0 || pulse.mod_freq == 0.0 {
        return Ok((band(pulse.phi_dc + pulse.amplitude * pulse.carrier(0.0))?, 0.0));
    }
    let m = 1024;
    let period = 1.0 / pulse.mod_freq;
    let freqs = (0..m)
        .map(|j| band(pulse.flat_top(period * j as f64 / m as f64)))
        .collect::<Result<Vec<f64>>>()?;
    let s = period_spectrum(&freqs, pulse.mod_freq);
    Ok((s.avg, s.excursion))
}

/// Sideband-resolved effective couplings under q2 modulation, GHz.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModulatedCouplings {
    pub weights: SidebandWeights,
    /// J_n(f̃2/(2f_p)) for comparison.
    pub eps_bessel: Vec<f64>,
    pub g01: Vec<Complex64>,
    pub g02: Vec<Complex64>,
    pub g20: Vec<Complex64>,
    pub warnings: Vec<String>,
}

impl ModulatedCouplings {
    fn at(v: &[Complex64], n_max: usize, n: i32) -> Complex64 {
        v[(n + n_max as i32) as usize]
    }

    pub fn g01_at(&self, n: i32) -> Complex64 {
        Self::at(&self.g01, self.weights.n_max, n)
    }

    pub fn g02_at(&self, n: i32) -> Complex64 {
        Self::at(&self.g02, self.weights.n_max, n)
    }

    pub fn g20_at(&self, n: i32) -> Complex64 {
        Self::at(&self.g20, self.weights.n_max, n)
    }
}

/// `p` holds the DC-bias parameters (q2 at its bias); q2's average frequency
/// replaces f2 in the detunings.
pub fn modulated_couplings(
    p: &DeviceParams,
    pulse: &FluxPulse,
    q2: &TransmonSpec,
    n_max: usize,
    variant: Variant,
) -> Result<ModulatedCouplings> {
    let w = weights_with(q2, pulse, n_max, p.xi)?;
    let s = variant.weight();
    let d1 = p.fc - p.f1;
    let s1 = p.fc + p.f1;
    let d2 = p.fc - w.f2_avg;
    let s2 = p.fc + w.f2_avg;
    check_denominators(&[("Δ1", d1), ("Δ1 + η1", d1 + p.eta1)])?;
    let mut out = ModulatedCouplings {
        eps_bessel: bessel_weights(w.f2_excursion, pulse.mod_freq, n_max),
        g01: Vec::new(),
        g02: Vec::new(),
        g20: Vec::new(),
        warnings: dispersive_warnings(p, d1, d2),
        weights: w,
    };
    let w = &out.weights;
    for (k, n) in w.orders().enumerate() {
        let nu = n as f64 * w.spacing;
        for d in [d2 - nu, d2 + p.eta2 - nu] {
            if d.abs() < RESONANCE_TOL {
                return Err(Error::SidebandResonance { n });
            }
        }
        if s > 0.0 && [s2 + nu, s2 - p.eta2 + nu].iter().any(|d| d.abs() < RESONANCE_TOL) {
            return Err(Error::SidebandResonance { n });
        }
        let g12 = w.eps_12[k] * p.g12;
        let gg = w.eps_2c[k] * (p.g1c * p.g2c);
        let sum01 = 1.0 / d1 + 1.0 / (d2 - nu) + s * (1.0 / s1 + 1.0 / (s2 + nu));
        let sum02 = 1.0 / d1 + 1.0 / (d2 + p.eta2 - nu) + s * (1.0 / s1 + 1.0 / (s2 - p.eta2 + nu));
        let sum20 = 1.0 / (d1 + p.eta1) + 1.0 / (d2 - nu) + s * (1.0 / (s1 - p.eta1) + 1.0 / (s2 + nu));
        out.g01.push(g12 - gg / 2.0 * sum01);
        out.g02.push(g12 * SQRT_2 - gg / SQRT_2 * sum02);
        out.g20.push(g12 * SQRT_2 - gg / SQRT_2 * sum20);
    }
    Ok(out)
}

/// Static couplings versus coupler flux (Φ0) with the qubits at their bias.
pub fn coupling_sweep(model: &Model, fluxes: &[f64], variant: Variant) -> Result<Vec<(f64, StaticEffective)>> {
    fluxes
        .iter()
        .map(|&phi| Ok((phi, static_couplings(&model.at_coupler(phi)?, variant)?)))
        .collect()
}

/// Coupler flux in [lo, hi] where the static g01 changes sign, if it does.
pub fn zero_coupling_flux(model: &Model, lo: f64, hi: f64, variant: Variant) -> Result<Option<f64>> {
    let g = |phi: f64| -> f64 {
        model
            .at_coupler(phi)
            .and_then(|p| static_couplings(&p, variant))
            .map(|s| s.g01)
            .unwrap_or(f64::NAN)
    };
    if !(g(lo) * g(hi) < 0.0) {
        return Ok(None);
    }
    Ok(crate::numeric::brent_root(g, lo, hi, 1e-12))
}
