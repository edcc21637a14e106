//! Process tomography on the two-qubit subspace: Pauli transfer matrices,
//! virtual-Z frames, fSim fits, readout compensation and analytic fidelity
//! estimates.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dynamics::DressedBasis;
use crate::effective::index;
use crate::error::{Error, Result};
use crate::numeric::nelder_mead;

type C = Complex64;

/// Computational states |q1 q2⟩ in the order 00, 01, 10, 11 (coupler in 0).
pub const COMPUTATIONAL: [[usize; 3]; 4] = [[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, 0, 1]];

pub const PAULI_LABELS: [&str; 4] = ["I", "X", "Y", "Z"];

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn pauli(k: usize) -> Matrix2<C> {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match k {
        0 => Matrix2::new(o, z, z, o),
        1 => Matrix2::new(z, o, o, z),
        2 => Matrix2::new(z, -i, i, z),
        _ => Matrix2::new(o, z, z, -o),
    }
}

pub fn kron2(a: &Matrix2<C>, b: &Matrix2<C>) -> Matrix4<C> {
    Matrix4::from_fn(|r, s| a[(r / 2, s / 2)] * b[(r % 2, s % 2)])
}

/// Two-qubit Pauli P_k = σ_{k/4} ⊗ σ_{k%4}, q1 first.
pub fn pauli2(k: usize) -> Matrix4<C> {
    kron2(&pauli(k / 4), &pauli(k % 4))
}

pub fn pauli2_label(k: usize) -> String {
    format!("{}{}", PAULI_LABELS[k / 4], PAULI_LABELS[k % 4])
}

/// 16×16 Pauli transfer matrix with the subspace leakage of the map it came
/// from.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessTensor {
    pub ptm: DMatrix<f64>,
    pub leakage: f64,
}

impl ProcessTensor {
    /// PTM of ρ ↦ MρM†; leakage 1 − Tr(M†M)/4.
    pub fn from_operator(m: &Matrix4<C>) -> Self {
        let ps: Vec<Matrix4<C>> = (0..16).map(pauli2).collect();
        let images: Vec<Matrix4<C>> = ps.iter().map(|p| m * p * m.adjoint()).collect();
        let ptm = DMatrix::from_fn(16, 16, |i, j| (ps[i] * images[j]).trace().re / 4.0);
        let leakage = 1.0 - (m.adjoint() * m).trace().re / 4.0;
        ProcessTensor { ptm, leakage }
    }

    /// Image of an arbitrary operator X: E(X) = ¼ Σ R_ij Tr(P_j X) P_i.
    pub fn apply(&self, x: &Matrix4<C>) -> Matrix4<C> {
        let mut out = Matrix4::zeros();
        let coeffs: Vec<C> = (0..16).map(|j| (pauli2(j) * x).trace()).collect();
        for i in 0..16 {
            let mut s = c(0.0, 0.0);
            for (j, cj) in coeffs.iter().enumerate() {
                s += cj * self.ptm[(i, j)];
            }
            out += pauli2(i) * (s / 4.0);
        }
        out
    }

    /// Choi-type matrix J[(i,j),(k,l)] = E(|j⟩⟨l|)_{ik}, so that for a
    /// unitary V the process fidelity is vec(V)†·J·vec(V)/16.
    pub fn choi(&self) -> DMatrix<C> {
        let mut j = DMatrix::zeros(16, 16);
        for b in 0..4 {
            for d in 0..4 {
                let mut unit = Matrix4::zeros();
                unit[(b, d)] = c(1.0, 0.0);
                let img = self.apply(&unit);
                for a in 0..4 {
                    for cc in 0..4 {
                        j[(4 * a + b, 4 * cc + d)] = img[(a, cc)];
                    }
                }
            }
        }
        j
    }

    /// Mean squared singular value of the unital block, 1 for unitaries.
    pub fn unitarity(&self) -> f64 {
        let block = self.ptm.view((1, 1), (15, 15));
        block.norm_squared() / 15.0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for k in 0..16 {
            out.push_str(&format!(",{}", pauli2_label(k)));
        }
        out.push('\n');
        for i in 0..16 {
            out.push_str(&pauli2_label(i));
            for j in 0..16 {
                out.push_str(&format!(",{}", self.ptm[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

/// ⟨a|U|b⟩ over the dressed computational states.
pub fn computational_block(u: &DMatrix<C>, basis: &DressedBasis) -> Matrix4<C> {
    let states: Vec<_> = COMPUTATIONAL.iter().map(|n| basis.state(*n)).collect();
    Matrix4::from_fn(|a, b| {
        let ub = u * &states[b];
        states[a].iter().zip(ub.iter()).map(|(x, y)| x.conj() * y).sum()
    })
}

/// Same as [`computational_block`] in the bare product basis.
pub fn bare_block(u: &DMatrix<C>) -> Matrix4<C> {
    let idx: Vec<usize> = COMPUTATIONAL.iter().map(|n| index(n[0], n[1], n[2])).collect();
    Matrix4::from_fn(|a, b| u[(idx[a], idx[b])])
}

pub fn qubit_subspace_ptm(u: &DMatrix<C>, basis: &DressedBasis) -> ProcessTensor {
    ProcessTensor::from_operator(&computational_block(u, basis))
}

#[rustfmt::skip]
pub fn fsim(theta: f64, phi: f64) -> Matrix4<C> {
    let z = c(0.0, 0.0);
    let (s, co) = theta.sin_cos();
    Matrix4::new(
        c(1.0, 0.0), z, z, z,
        z, c(co, 0.0), c(0.0, -s), z,
        z, c(0.0, -s), c(co, 0.0), z,
        z, z, z, C::from_polar(1.0, -phi),
    )
}

pub fn iswap() -> Matrix4<C> {
    fsim(-PI / 2.0, 0.0)
}

pub fn cz() -> Matrix4<C> {
    fsim(0.0, PI)
}

/// Rz(z1) ⊗ Rz(z2) with Rz(z) = diag(e^{−iz/2}, e^{iz/2}).
pub fn rz_pair(z1: f64, z2: f64) -> Matrix4<C> {
    let ph = [-(z1 + z2) / 2.0, -(z1 - z2) / 2.0, (z1 - z2) / 2.0, (z1 + z2) / 2.0];
    Matrix4::from_diagonal(&nalgebra::Vector4::from_fn(|k, _| C::from_polar(1.0, ph[k])))
}

const ROW_LABELS: [&str; 4] = ["00", "01", "10", "11"];

/// Local Z angles (z1, z2) such that Rz(z1)⊗Rz(z2)·M is closest to `target`
/// on the rows of |00⟩, |01⟩ and |10⟩.
pub fn extract_virtual_z(m: &Matrix4<C>, target: &Matrix4<C>) -> Result<(f64, f64)> {
    let mut overlaps = [c(0.0, 0.0); 3];
    for (k, o) in overlaps.iter_mut().enumerate() {
        *o = (0..4).map(|j| m[(k, j)] * target[(k, j)].conj()).sum();
        if o.norm() < 1e-6 {
            return Err(Error::IllConditioned {
                state: ROW_LABELS[k],
                magnitude: o.norm(),
            });
        }
    }
    let arg = |k: usize| overlaps[k].arg();
    let wrap = |x: f64| (x + PI).rem_euclid(2.0 * PI) - PI;
    Ok((wrap(-(arg(2) - arg(0))), wrap(-(arg(1) - arg(0)))))
}

pub fn virtual_z_correct(m: &Matrix4<C>, z1: f64, z2: f64) -> Matrix4<C> {
    rz_pair(z1, z2) * m
}

/// F_pro = Tr(R_idealᵀ R)/16, F_avg = (4·F_pro + 1)/5.
pub fn process_fidelity(ptm: &ProcessTensor, ideal: &ProcessTensor) -> f64 {
    ideal.ptm.dot(&ptm.ptm) / 16.0
}

pub fn average_fidelity(ptm: &ProcessTensor, ideal: &ProcessTensor) -> f64 {
    (4.0 * process_fidelity(ptm, ideal) + 1.0) / 5.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FSimFit {
    pub theta: f64,
    pub phi: f64,
    /// Average fidelity to fSim(θ, φ).
    pub fidelity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Best fSim(θ, φ) for a channel: 121×121 grid over (−π, π]², then a simplex
/// refinement of the best cell.
pub fn fit_fsim(ptm: &ProcessTensor) -> FSimFit {
    let j = ptm.choi();
    let f_pro = |theta: f64, phi: f64| -> f64 {
        let v = fsim(theta, phi);
        let vec: Vec<C> = (0..16).map(|k| v[(k / 4, k % 4)]).collect();
        let mut s = c(0.0, 0.0);
        for a in 0..16 {
            if vec[a].norm_sqr() == 0.0 {
                continue;
            }
            let mut row = c(0.0, 0.0);
            for b in 0..16 {
                row += j[(a, b)] * vec[b];
            }
            s += vec[a].conj() * row;
        }
        s.re / 16.0
    };
    let n = 121;
    let grid = |k: usize| -PI + 2.0 * PI * (k + 1) as f64 / n as f64;
    let (best, _) = (0..n * n)
        .into_par_iter()
        .map(|k| (k, f_pro(grid(k / n), grid(k % n))))
        .reduce(|| (0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    let start = [grid(best / n), grid(best % n)];
    let (x, v) = nelder_mead(|x| -f_pro(x[0], x[1]), &start, 2.0 * PI / n as f64, 1e-15, 2000);
    let warning = (ptm.unitarity() < 0.9).then(|| {
        format!(
            "channel far from unitary (unitarity {:.4}); fSim fit is approximate",
            ptm.unitarity()
        )
    });
    FSimFit {
        theta: wrap_angle(x[0]),
        phi: wrap_angle(x[1]),
        fidelity: (4.0 * -v + 1.0) / 5.0,
        warning,
    }
}

/// Infidelity 3(1 − cos δφ)/10 from a conditional-phase error δφ.
pub fn phase_error(delta_phi: f64) -> f64 {
    3.0 * (1.0 - delta_phi.cos()) / 10.0
}

/// Coherence times in µs; the q2 values are those under modulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTimes {
    pub t1_q1: f64,
    pub t1_q2: f64,
    pub t2s_q1: f64,
    pub t2s_q2: f64,
}

impl CoherenceTimes {
    pub fn validate(&self) -> Result<()> {
        for v in [self.t1_q1, self.t1_q2, self.t2s_q1, self.t2s_q2] {
            if !(v > 0.0) {
                return Err(Error::invalid("coherence times", format!("must be positive, got {v}")));
            }
        }
        let exceeds = |t2: f64, t1: f64| t2.is_finite() && t2 > 2.0 * t1;
        if exceeds(self.t2s_q1, self.t1_q1) || exceeds(self.t2s_q2, self.t1_q2) {
            return Err(Error::invalid("coherence times", "T2* exceeds 2·T1"));
        }
        Ok(())
    }
}

fn check_tau(tau_ns: f64) -> Result<f64> {
    if !(tau_ns > 0.0) {
        return Err(Error::invalid(
            "gate duration",
            format!("must be positive, got {tau_ns}"),
        ));
    }
    Ok(tau_ns * 1e-3)
}

/// 1 − (1/T1 + 1/T̃1)·τ/5 − 2(1/T2* + 1/T̃2*)·τ/5 for a gate of `tau_ns`.
pub fn coherence_fidelity_iswap(ct: &CoherenceTimes, tau_ns: f64) -> Result<f64> {
    ct.validate()?;
    let tau = check_tau(tau_ns)?;
    Ok(1.0 - (1.0 / ct.t1_q1 + 1.0 / ct.t1_q2) * tau / 5.0 - 2.0 * (1.0 / ct.t2s_q1 + 1.0 / ct.t2s_q2) * tau / 5.0)
}

/// 1 − 19(1/T1 + 1/T̃1)·τ/60 − (29/(60·T2*) + 61/(80·T̃2*))·τ.
pub fn coherence_fidelity_cz(ct: &CoherenceTimes, tau_ns: f64) -> Result<f64> {
    ct.validate()?;
    let tau = check_tau(tau_ns)?;
    Ok(1.0
        - 19.0 * (1.0 / ct.t1_q1 + 1.0 / ct.t1_q2) * tau / 60.0
        - (29.0 / (60.0 * ct.t2s_q1) + 61.0 / (80.0 * ct.t2s_q2)) * tau)
}

/// Per-qubit readout confusion: `m[(i, j)]` = P(read i | prepared j).
pub fn symmetric_confusion(fidelity: f64) -> nalgebra::Matrix2<f64> {
    nalgebra::Matrix2::new(fidelity, 1.0 - fidelity, 1.0 - fidelity, fidelity)
}

fn joint_confusion(c1: &nalgebra::Matrix2<f64>, c2: &nalgebra::Matrix2<f64>) -> nalgebra::Matrix4<f64> {
    nalgebra::Matrix4::from_fn(|r, s| c1[(r / 2, s / 2)] * c2[(r % 2, s % 2)])
}

/// Outcome distribution seen through imperfect readout.
pub fn apply_readout(probs: &[f64; 4], c1: &nalgebra::Matrix2<f64>, c2: &nalgebra::Matrix2<f64>) -> [f64; 4] {
    let v = joint_confusion(c1, c2) * nalgebra::Vector4::from_column_slice(probs);
    [v[0], v[1], v[2], v[3]]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Compensated {
    pub probs: [f64; 4],
    /// Total negative weight removed before renormalizing.
    pub clipped: f64,
}

/// Invert the product confusion matrix on a measured distribution, clip
/// negative probabilities and renormalize.
pub fn readout_compensation(
    measured: &[f64; 4],
    c1: &nalgebra::Matrix2<f64>,
    c2: &nalgebra::Matrix2<f64>,
) -> Result<Compensated> {
    for m in [c1, c2] {
        if m.determinant().abs() < 1e-12 {
            return Err(Error::Singular("readout confusion matrix"));
        }
    }
    let inv = joint_confusion(c1, c2)
        .try_inverse()
        .ok_or(Error::Singular("readout confusion matrix"))?;
    let raw = inv * nalgebra::Vector4::from_column_slice(measured);
    let clipped: f64 = raw.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let kept: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = kept.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("no probability left after clipping".into()));
    }
    Ok(Compensated {
        probs: [kept[0] / total, kept[1] / total, kept[2] / total, kept[3] / total],
        clipped,
    })
}

/// Settings for sampled tomography.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QptSettings {
    pub shots: u64,
    pub readout: [f64; 2],
}

fn single_qubit_inputs() -> [Matrix2<C>; 4] {
    let ket = |a: C, b: C| nalgebra::Vector2::new(a, b);
    let s = 1.0 / 2f64.sqrt();
    let kets = [
        ket(c(1.0, 0.0), c(0.0, 0.0)),
        ket(c(0.0, 0.0), c(1.0, 0.0)),
        ket(c(s, 0.0), c(s, 0.0)),
        ket(c(s, 0.0), c(0.0, s)),
    ];
    kets.map(|k| k * k.adjoint())
}

/// Coefficients of I, X, Y, Z in the inputs |0⟩, |1⟩, |+⟩, |+i⟩.
const INPUT_DECOMP: [[f64; 4]; 4] = [
    [1.0, 1.0, 0.0, 0.0],
    [-1.0, -1.0, 2.0, 0.0],
    [-1.0, -1.0, 0.0, 2.0],
    [1.0, -1.0, 0.0, 0.0],
];

/// Basis change taking the eigenbasis of σ_k to the computational basis.
fn measurement_rotation(k: usize) -> Matrix2<C> {
    let s = 1.0 / 2f64.sqrt();
    match k {
        1 => Matrix2::new(c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)),
        2 => Matrix2::new(c(s, 0.0), c(0.0, -s), c(s, 0.0), c(0.0, s)),
        _ => Matrix2::identity(),
    }
}

/// Tomography of ρ ↦ MρM† from 16 product inputs and 9 Pauli measurement
/// bases with finite shots and readout error, compensated and linearly
/// inverted. Outcomes are renormalized per setting, so leakage shows up only
/// as a loss of fidelity.
pub fn simulate_qpt<R: Rng>(m: &Matrix4<C>, settings: &QptSettings, rng: &mut R) -> Result<ProcessTensor> {
    let inputs = single_qubit_inputs();
    let c1 = symmetric_confusion(settings.readout[0]);
    let c2 = symmetric_confusion(settings.readout[1]);
    // expect[input pair][pauli k] = Tr(P_k E(ρ)).
    let mut expect = vec![[0.0f64; 16]; 16];
    let mut counts = vec![[0u32; 16]; 16];
    for a in 0..4 {
        for b in 0..4 {
            let rho = kron2(&inputs[a], &inputs[b]);
            let out = m * rho * m.adjoint();
            let norm = out.trace().re;
            for ma in 1..4 {
                for mb in 1..4 {
                    let rot = kron2(&measurement_rotation(ma), &measurement_rotation(mb));
                    let r = rot * out * rot.adjoint();
                    let mut probs = [0.0; 4];
                    for (k, p) in probs.iter_mut().enumerate() {
                        *p = (r[(k, k)].re / norm).max(0.0);
                    }
                    let seen = apply_readout(&probs, &c1, &c2);
                    let sampled = sample_counts(&seen, settings.shots, rng)?;
                    let freq = sampled.map(|n| n as f64 / settings.shots as f64);
                    let p = readout_compensation(&freq, &c1, &c2)?.probs;
                    let sign = |s: usize, bit_a: bool, bit_b: bool| -> f64 {
                        let mut v = 1.0;
                        if bit_a && (s >> 1) & 1 == 1 {
                            v = -v;
                        }
                        if bit_b && s & 1 == 1 {
                            v = -v;
                        }
                        v
                    };
                    let ev = |bit_a: bool, bit_b: bool| (0..4).map(|s| sign(s, bit_a, bit_b) * p[s]).sum::<f64>();
                    let slot = &mut expect[4 * a + b];
                    let cnt = &mut counts[4 * a + b];
                    for (k, ba, bb) in [(4 * ma, true, false), (mb, false, true), (4 * ma + mb, true, true)] {
                        slot[k] += ev(ba, bb);
                        cnt[k] += 1;
                    }
                }
            }
            expect[4 * a + b][0] = 1.0;
            counts[4 * a + b][0] = 1;
        }
    }
    let mut ptm = DMatrix::zeros(16, 16);
    for j in 0..16 {
        let (ja, jb) = (j / 4, j % 4);
        for a in 0..4 {
            for b in 0..4 {
                let w = INPUT_DECOMP[ja][a] * INPUT_DECOMP[jb][b];
                if w == 0.0 {
                    continue;
                }
                for i in 0..16 {
                    let n = counts[4 * a + b][i];
                    ptm[(i, j)] += w * expect[4 * a + b][i] / n as f64 / 4.0;
                }
            }
        }
    }
    Ok(ProcessTensor {
        ptm,
        leakage: 1.0 - (m.adjoint() * m).trace().re / 4.0,
    })
}

fn sample_counts<R: Rng>(probs: &[f64; 4], shots: u64, rng: &mut R) -> Result<[u64; 4]> {
    let mut left = shots;
    let mut mass = 1.0;
    let mut out = [0u64; 4];
    for k in 0..3 {
        let p = if mass > 0.0 {
            (probs[k] / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let n = Binomial::new(left, p)
            .map_err(|e| Error::invalid("shot sampling", e.to_string()))?
            .sample(rng);
        out[k] = n;
        left -= n;
        mass -= probs[k];
    }
    out[3] = left;
    Ok(out)
}
