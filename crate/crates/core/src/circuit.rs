//! Lumped capacitance network of two floating transmons and a grounded
//! coupler, reduced to charging and coupling energies.

use nalgebra::{Matrix3, Matrix5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// e²/(2h) in GHz·fF, from the exact SI values e = 1.602176634e-19 C and
/// h = 6.62607015e-34 J·s. A charging energy in GHz is this constant divided
/// by a capacitance in fF.
pub const CHARGE_ENERGY_GHZ_FF: f64 = 19.370_229_324_659_127;

/// Mode ordering of the 5×5 mode capacitance matrix.
pub const MODE_LABELS: [&str; 5] = ["1p", "1m", "c", "2p", "2m"];

/// Capacitances in fF. Node 0 is ground; nodes 1, 2 are the pads of qubit 1,
/// node 3 the coupler island, nodes 4, 5 the pads of qubit 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacitanceNetwork {
    #[serde(rename = "c01_ff")]
    pub c01: f64,
    #[serde(rename = "c02_ff")]
    pub c02: f64,
    #[serde(rename = "c03_ff")]
    pub c03: f64,
    #[serde(rename = "c04_ff")]
    pub c04: f64,
    #[serde(rename = "c05_ff")]
    pub c05: f64,
    #[serde(rename = "c12_ff")]
    pub c12: f64,
    #[serde(rename = "c13_ff", default)]
    pub c13: f64,
    #[serde(rename = "c23_ff")]
    pub c23: f64,
    #[serde(rename = "c24_ff")]
    pub c24: f64,
    #[serde(rename = "c34_ff")]
    pub c34: f64,
    #[serde(rename = "c35_ff", default)]
    pub c35: f64,
    #[serde(rename = "c45_ff")]
    pub c45: f64,
}

impl CapacitanceNetwork {
    pub fn values(&self) -> [f64; 12] {
        [
            self.c01, self.c02, self.c03, self.c04, self.c05, self.c12, self.c13, self.c23, self.c24, self.c34,
            self.c35, self.c45,
        ]
    }

    pub fn scaled(&self, s: f64) -> Self {
        let v = self.values().map(|c| c * s);
        Self::from_values(v)
    }

    pub fn from_values(v: [f64; 12]) -> Self {
        Self {
            c01: v[0],
            c02: v[1],
            c03: v[2],
            c04: v[3],
            c05: v[4],
            c12: v[5],
            c13: v[6],
            c23: v[7],
            c24: v[8],
            c34: v[9],
            c35: v[10],
            c45: v[11],
        }
    }

    /// Sum of the capacitances seen by the qubit 1 common mode.
    pub fn c1p(&self) -> f64 {
        self.c01 + self.c02 + self.c13 + self.c23 + self.c24
    }

    /// Sum of the capacitances seen by the qubit 2 common mode.
    pub fn c2p(&self) -> f64 {
        self.c04 + self.c05 + self.c34 + self.c35 + self.c24
    }

    /// Total coupler island capacitance.
    pub fn ccp(&self) -> f64 {
        self.c03 + self.c13 + self.c23 + self.c34 + self.c35
    }

    /// Effective differential-mode capacitance of qubit 1.
    pub fn c_sigma1(&self) -> f64 {
        self.c12 + self.c1p() / 4.0
    }

    /// Effective differential-mode capacitance of qubit 2.
    pub fn c_sigma2(&self) -> f64 {
        self.c45 + self.c2p() / 4.0
    }

    fn validate(&self) -> Result<()> {
        for c in self.values() {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::invalid(
                    "capacitance network",
                    format!("capacitances must be finite and nonnegative, got {c}"),
                ));
            }
        }
        Ok(())
    }
}

/// Two-junction SQUID, energies in GHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquidSpec {
    #[serde(rename = "ejs_ghz")]
    pub ejs: f64,
    #[serde(rename = "ejl_ghz")]
    pub ejl: f64,
}

impl SquidSpec {
    pub fn symmetric(ej_total: f64) -> Self {
        Self {
            ejs: ej_total / 2.0,
            ejl: ej_total / 2.0,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.ejs == self.ejl
    }

    pub fn ej_max(&self) -> f64 {
        self.ejs + self.ejl
    }

    pub fn ej_min(&self) -> f64 {
        (self.ejs - self.ejl).abs()
    }
}

/// Effective Josephson energy and phase offset of a SQUID at reduced external
/// flux `phi_e = 2πΦ/Φ0` (radians).
pub fn squid_energy(squid: &SquidSpec, phi_e: f64) -> Result<(f64, f64)> {
    let SquidSpec { ejs, ejl } = *squid;
    if !(ejs >= 0.0 && ejl >= 0.0 && ejs + ejl > 0.0) {
        return Err(Error::invalid(
            "SQUID",
            format!("junction energies must be nonnegative and not both zero (ejs={ejs}, ejl={ejl})"),
        ));
    }
    let ej2 = ejs * ejs + ejl * ejl + 2.0 * ejs * ejl * phi_e.cos();
    let ej = ej2.max(0.0).sqrt();
    let phi0 = ((ejs - ejl) / (ejs + ejl) * (phi_e / 2.0).tan()).atan();
    Ok((ej, phi0))
}

/// The 5×5 mode capacitance matrix (fF) in the order 1p, 1m, c, 2p, 2m, with
/// Φ1 = (Φ1p − Φ1m)/2, Φ2 = (Φ1p + Φ1m)/2, Φ4 = (Φ2p + Φ2m)/2,
/// Φ5 = (Φ2p − Φ2m)/2.
pub fn mode_capacitance_matrix(net: &CapacitanceNetwork) -> Matrix5<f64> {
    let n = net;
    let c1p = n.c1p();
    let c2p = n.c2p();
    let c1pm = n.c02 - n.c01 + n.c23 - n.c13 + n.c24;
    let c2pm = n.c04 - n.c05 + n.c34 - n.c35 + n.c24;

    let mut m = Matrix5::zeros();
    let mut set = |i: usize, j: usize, v: f64| {
        m[(i, j)] = v;
        m[(j, i)] = v;
    };
    set(0, 0, c1p / 4.0);
    set(0, 1, c1pm / 4.0);
    set(0, 2, -(n.c13 + n.c23) / 2.0);
    set(0, 3, -n.c24 / 4.0);
    set(0, 4, -n.c24 / 4.0);
    set(1, 1, (c1p + 4.0 * n.c12) / 4.0);
    set(1, 2, (n.c13 - n.c23) / 2.0);
    set(1, 3, -n.c24 / 4.0);
    set(1, 4, -n.c24 / 4.0);
    set(2, 2, n.ccp());
    set(2, 3, -(n.c34 + n.c35) / 2.0);
    set(2, 4, -(n.c34 - n.c35) / 2.0);
    set(3, 3, c2p / 4.0);
    set(3, 4, c2pm / 4.0);
    set(4, 4, (c2p + 4.0 * n.c45) / 4.0);
    m
}

/// Charging energies of the three oscillating modes and their pairwise
/// charge-coupling energies, all in GHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeEnergies {
    pub ec1: f64,
    pub ec2: f64,
    pub ecc: f64,
    pub e1c: f64,
    pub e2c: f64,
    pub e12: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkEnergies {
    /// From the inverse of the full mode matrix.
    pub exact: ChargeEnergies,
    /// Closed-form weak-coupling approximation.
    pub approx: ChargeEnergies,
}

/// Reduce a capacitance network to charging and coupling energies.
///
/// The common modes 1p and 2p carry no inductance; with zero offset charge
/// their conjugate charges vanish, so the dynamical block is the
/// (1m, c, 2m) block of the inverse of the full mode matrix.
pub fn energies_from_network(net: &CapacitanceNetwork) -> Result<NetworkEnergies> {
    net.validate()?;
    let c = mode_capacitance_matrix(net);
    let scale = c.amax();
    if scale <= 0.0 {
        return Err(Error::DegenerateNetwork);
    }
    let chol = (c / scale).cholesky().ok_or(Error::DegenerateNetwork)?;
    let inv = chol.inverse() / scale;
    let idx = [1usize, 2, 4];
    let k = Matrix3::from_fn(|i, j| inv[(idx[i], idx[j])]);
    let cond = {
        let ev = (c / scale).symmetric_eigenvalues();
        ev.max() / ev.min()
    };
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::DegenerateNetwork);
    }
    let q = CHARGE_ENERGY_GHZ_FF;
    let exact = ChargeEnergies {
        ec1: q * k[(0, 0)],
        ecc: q * k[(1, 1)],
        ec2: q * k[(2, 2)],
        e1c: 2.0 * q * k[(0, 1)],
        e2c: 2.0 * q * k[(2, 1)],
        e12: 2.0 * q * k[(0, 2)],
    };

    let cs1 = net.c_sigma1();
    let cs2 = net.c_sigma2();
    let ccp = net.ccp();
    let approx = ChargeEnergies {
        ec1: q / cs1,
        ec2: q / cs2,
        ecc: q / ccp,
        e1c: q * net.c23 / (ccp * cs1),
        e2c: q * net.c34 / (ccp * cs2),
        e12: 0.5 * q * (net.c23 * net.c34 + net.c24 * ccp) / (cs1 * cs2 * ccp),
    };
    Ok(NetworkEnergies { exact, approx })
}
