//! Perturbative transmon spectrum, zero-point fluctuations and the
//! charge-coupling to exchange-coupling conversion.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::circuit::{squid_energy, ChargeEnergies, SquidSpec};
use crate::error::{Error, Result};
use crate::numeric::{brent_root, levenberg_marquardt};

/// Reduced external phase 2πΦ/Φ0 for a flux in units of Φ0.
pub fn flux_phase(flux_phi0: f64) -> f64 {
    2.0 * PI * flux_phi0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmonSpec {
    #[serde(rename = "ec_ghz")]
    pub ec: f64,
    #[serde(flatten)]
    pub squid: SquidSpec,
}

impl TransmonSpec {
    /// EJ/EC at the top of the band.
    pub fn ej_over_ec(&self) -> f64 {
        self.squid.ej_max() / self.ec
    }

    pub fn regime_warning(&self) -> Option<String> {
        let r = self.ej_over_ec();
        (r < 20.0).then(|| format!("EJ/EC = {r:.1} is below the transmon regime (>= 20)"))
    }

    pub fn ej(&self, phi_e: f64) -> Result<f64> {
        let (ej, _) = squid_energy(&self.squid, phi_e)?;
        if !(ej > 0.0) || !(self.ec > 0.0) {
            return Err(Error::invalid(
                "transmon",
                format!("EJ and EC must be positive (EJ={ej}, EC={})", self.ec),
            ));
        }
        Ok(ej)
    }
}

/// Order of the perturbative expansion in ξ = √(2EC/EJ).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Expansion {
    #[default]
    SixthOrder,
    /// ξ → 0: f01 = √(8EJEC) − EC, anharmonicity EC.
    Leading,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Levels {
    pub ej: f64,
    pub xi: f64,
    /// Energies of |0⟩, |1⟩, |2⟩ in GHz.
    pub energies: [f64; 3],
    pub f01: f64,
    /// Absolute anharmonicity f01 − f12.
    pub eta: f64,
}

impl Levels {
    pub fn from_ej(ec: f64, ej: f64, expansion: Expansion) -> Self {
        let xi = match expansion {
            Expansion::SixthOrder => (2.0 * ec / ej).sqrt(),
            Expansion::Leading => 0.0,
        };
        let omega = (8.0 * ej * ec).sqrt() - ec * (1.0 + xi / 4.0);
        let e = |n: f64| (omega + ec / 2.0 * (1.0 + xi / 4.0) - ec / 2.0 * (1.0 + 9.0 * xi / 16.0) * n) * n;
        let energies = [e(0.0), e(1.0), e(2.0)];
        let f01 = energies[1] - energies[0];
        let eta = f01 - (energies[2] - energies[1]);
        Levels {
            ej,
            xi,
            energies,
            f01,
            eta,
        }
    }
}

pub fn level_energies(spec: &TransmonSpec, phi_e: f64) -> Result<Levels> {
    level_energies_with(spec, phi_e, Expansion::SixthOrder)
}

pub fn level_energies_with(spec: &TransmonSpec, phi_e: f64, expansion: Expansion) -> Result<Levels> {
    let ej = spec.ej(phi_e)?;
    Ok(Levels::from_ej(spec.ec, ej, expansion))
}

/// Charge and phase zero-point fluctuations (n_zpf, φ_zpf); their product is
/// 1/2.
pub fn zero_point(spec: &TransmonSpec, phi_e: f64) -> Result<(f64, f64)> {
    let ej = spec.ej(phi_e)?;
    let n = (ej / (8.0 * spec.ec)).powf(0.25) / SQRT_2;
    Ok((n, 0.5 / n))
}

/// Exchange couplings in GHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    pub g1c: f64,
    pub g2c: f64,
    pub g12: f64,
}

/// Exchange coupling between two transmon modes sharing a charge-coupling
/// energy `e`.
pub fn exchange_coupling(e: f64, ec_a: f64, ej_a: f64, ec_b: f64, ej_b: f64) -> f64 {
    let xa = (2.0 * ec_a / ej_a).sqrt();
    let xb = (2.0 * ec_b / ej_b).sqrt();
    e / SQRT_2 * (ej_a / ec_a * ej_b / ec_b).powf(0.25) * (1.0 - (xa + xb) / 8.0)
}

/// Couplings at reduced external phases `phi` = (q1, q2, coupler).
pub fn coupling_strengths(e: &ChargeEnergies, specs: [&TransmonSpec; 3], phi: [f64; 3]) -> Result<Couplings> {
    let [q1, q2, c] = specs;
    let ej1 = q1.ej(phi[0])?;
    let ej2 = q2.ej(phi[1])?;
    let ejc = c.ej(phi[2])?;
    Ok(Couplings {
        g1c: exchange_coupling(e.e1c, q1.ec, ej1, c.ec, ejc),
        g2c: exchange_coupling(e.e2c, q2.ec, ej2, c.ec, ejc),
        g12: exchange_coupling(e.e12, q1.ec, ej1, q2.ec, ej2),
    })
}

/// f01 over a grid of fluxes in units of Φ0.
pub fn frequency_vs_flux(spec: &TransmonSpec, fluxes: &[f64]) -> Result<Vec<f64>> {
    fluxes
        .iter()
        .map(|&f| level_energies(spec, flux_phase(f)).map(|l| l.f01))
        .collect()
}

/// Transmon whose band spans `f_max` (at zero flux) down to `f_min` (at half
/// flux) with anharmonicity `eta` at the top, all in GHz.
pub fn fit_transmon_band(f_max: f64, f_min: f64, eta: f64) -> Result<TransmonSpec> {
    if !(f_max > f_min && f_min > 0.0 && eta > 0.0) {
        return Err(Error::invalid(
            "band",
            format!("need f_max > f_min > 0 and eta > 0 (got {f_max}, {f_min}, {eta})"),
        ));
    }
    let ec0 = eta / 1.1;
    let ej0 = (f_max + ec0).powi(2) / (8.0 * ec0);
    let fit = levenberg_marquardt(
        |p| {
            if p[0] <= 0.0 || p[1] <= 0.0 {
                return vec![1e3, 1e3];
            }
            let l = Levels::from_ej(p[0], p[1], Expansion::SixthOrder);
            vec![l.f01 - f_max, l.eta - eta]
        },
        &[ec0, ej0],
        200,
    );
    if fit.residual_norm > 1e-9 {
        return Err(Error::FitFailed {
            residual: fit.residual_norm,
        });
    }
    let (ec, ej_sum) = (fit.params[0], fit.params[1]);
    let f_at = |ej: f64| Levels::from_ej(ec, ej, Expansion::SixthOrder).f01 - f_min;
    let ej_diff = brent_root(f_at, 1e-6 * ej_sum, ej_sum, 1e-13)
        .ok_or_else(|| Error::invalid("band", format!("f_min = {f_min} GHz not reachable")))?;
    Ok(TransmonSpec {
        ec,
        squid: SquidSpec {
            ejs: (ej_sum - ej_diff) / 2.0,
            ejl: (ej_sum + ej_diff) / 2.0,
        },
    })
}

/// Least-squares fit of the junction energies to measured (flux in Φ0, f01 in
/// GHz) pairs at known EC. The result is ordered so that `ejs <= ejl`.
pub fn fit_squid_curve(ec: f64, data: &[(f64, f64)], initial: SquidSpec) -> Result<SquidSpec> {
    if data.len() < 3 {
        return Err(Error::Degenerate(format!(
            "squid fit needs at least 3 points, got {}",
            data.len()
        )));
    }
    let model = |p: &[f64]| -> Vec<f64> {
        let s = TransmonSpec {
            ec,
            squid: SquidSpec {
                ejs: p[0].abs(),
                ejl: p[1].abs(),
            },
        };
        data.iter()
            .map(|&(x, f)| match level_energies(&s, flux_phase(x)) {
                Ok(l) => l.f01 - f,
                Err(_) => 1e3,
            })
            .collect()
    };
    let fit = levenberg_marquardt(model, &[initial.ejs, initial.ejl], 500);
    if !fit.converged {
        return Err(Error::FitFailed {
            residual: fit.residual_norm,
        });
    }
    let (a, b) = (fit.params[0].abs(), fit.params[1].abs());
    Ok(SquidSpec {
        ejs: a.min(b),
        ejl: a.max(b),
    })
}

/// Three-body model parameters, all in GHz. Anharmonicities are positive
/// magnitudes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub f1: f64,
    pub f2: f64,
    pub fc: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub etac: f64,
    pub g1c: f64,
    pub g2c: f64,
    pub g12: f64,
    /// ξ = √(2EC/EJ) of q1, q2 and the coupler. Only used to carry the flux
    /// dependence of the couplings under modulation.
    #[serde(default)]
    pub xi: [f64; 3],
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.f1, self.f2, self.fc, self.eta1, self.eta2, self.etac, self.g1c, self.g2c, self.g12,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("device parameters", "non-finite value"));
        }
        if !(self.f1 > 0.0 && self.f2 > 0.0 && self.fc > 0.0) {
            return Err(Error::invalid("device parameters", "frequencies must be positive"));
        }
        if !(self.eta1 > 0.0 && self.eta2 > 0.0 && self.etac > 0.0) {
            return Err(Error::invalid(
                "device parameters",
                "anharmonicities must be positive magnitudes",
            ));
        }
        Ok(())
    }

    /// g1c/|fc − f1| and g2c/|fc − f2|.
    pub fn dispersive_ratios(&self) -> [f64; 2] {
        [
            self.g1c.abs() / (self.fc - self.f1).abs(),
            self.g2c.abs() / (self.fc - self.f2).abs(),
        ]
    }

    pub fn with_f2(mut self, f2: f64) -> Self {
        self.f2 = f2;
        self
    }

    pub fn with_couplings(mut self, g1c: f64, g2c: f64, g12: f64) -> Self {
        self.g1c = g1c;
        self.g2c = g2c;
        self.g12 = g12;
        self
    }
}

/// Assemble the three-body parameters from the three transmons at reduced
/// external phases `phi` = (q1, q2, coupler).
pub fn device_params(e: &ChargeEnergies, specs: [&TransmonSpec; 3], phi: [f64; 3]) -> Result<DeviceParams> {
    let l1 = level_energies(specs[0], phi[0])?;
    let l2 = level_energies(specs[1], phi[1])?;
    let lc = level_energies(specs[2], phi[2])?;
    let g = coupling_strengths(e, specs, phi)?;
    Ok(DeviceParams {
        f1: l1.f01,
        f2: l2.f01,
        fc: lc.f01,
        eta1: l1.eta,
        eta2: l2.eta,
        etac: lc.eta,
        g1c: g.g1c,
        g2c: g.g2c,
        g12: g.g12,
        xi: [l1.xi, l2.xi, lc.xi],
    })
}
