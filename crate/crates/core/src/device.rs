//! Device description file and the derived three-body model.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::circuit::{energies_from_network, CapacitanceNetwork, ChargeEnergies, SquidSpec};
use crate::error::{Error, Result};
use crate::spectrum::{device_params, flux_phase, DeviceParams, TransmonSpec};

const BUNDLED: &str = include_str!("../data/device.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    #[serde(default)]
    pub synthetic: bool,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub ejs_ghz: f64,
    pub ejl_ghz: f64,
    #[serde(default)]
    pub flux_bias_phi0: f64,
}

impl ModeConfig {
    pub fn squid(&self) -> SquidSpec {
        SquidSpec {
            ejs: self.ejs_ghz,
            ejl: self.ejl_ghz,
        }
    }
}

/// Coherence times in µs. `t1_q2_us` and `t2s_q2_us` are the values under
/// modulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceConfig {
    pub t1_q1_us: f64,
    pub t1_q2_us: f64,
    pub t2s_q1_us: f64,
    pub t2s_q2_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2s_q2_idle_us: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    pub fidelity_q1: f64,
    pub fidelity_q2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Propagation step; defaults to 1/(40·fc) at the idle point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_ns: Option<f64>,
    pub ramp_ns: f64,
    #[serde(default = "default_cutoff")]
    pub sideband_cutoff: usize,
    #[serde(default = "default_guard")]
    pub guard_band_ghz: f64,
}

fn default_cutoff() -> usize {
    5
}

fn default_guard() -> f64 {
    0.02
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    pub mod_freq_ghz: f64,
    pub coupler_bias_phi0: f64,
    /// Effective coupling the coupler bias was chosen for.
    pub target_coupling_ghz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatesConfig {
    pub iswap: GateConfig,
    pub cz20: GateConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub meta: Meta,
    pub network: CapacitanceNetwork,
    pub q1: ModeConfig,
    pub q2: ModeConfig,
    pub coupler: ModeConfig,
    pub coherence: CoherenceConfig,
    pub readout: ReadoutConfig,
    pub simulation: SimulationConfig,
    pub gates: GatesConfig,
}

impl DeviceConfig {
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED).expect("bundled device file parses")
    }

    pub fn bundled_source() -> &'static str {
        BUNDLED
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: DeviceConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("device config serializes")
    }

    fn validate(&self) -> Result<()> {
        let c = &self.coherence;
        for (name, v) in [
            ("t1_q1_us", c.t1_q1_us),
            ("t1_q2_us", c.t1_q2_us),
            ("t2s_q1_us", c.t2s_q1_us),
            ("t2s_q2_us", c.t2s_q2_us),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("coherence.{name} must be positive, got {v}")));
            }
        }
        for (name, f) in [
            ("fidelity_q1", self.readout.fidelity_q1),
            ("fidelity_q2", self.readout.fidelity_q2),
        ] {
            if !(f > 0.5 && f <= 1.0) {
                return Err(Error::Config(format!("readout.{name} must lie in (0.5, 1], got {f}")));
            }
        }
        if !(self.simulation.ramp_ns >= 0.0) {
            return Err(Error::Config("simulation.ramp_ns must be >= 0".into()));
        }
        if let Some(dt) = self.simulation.dt_ns {
            if !(dt > 0.0) {
                return Err(Error::Config("simulation.dt_ns must be positive".into()));
            }
        }
        for (name, g) in [("iswap", &self.gates.iswap), ("cz20", &self.gates.cz20)] {
            if !(g.mod_freq_ghz > 0.0) {
                return Err(Error::Config(format!("gates.{name}.mod_freq_ghz must be positive")));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Model> {
        let energies = energies_from_network(&self.network)?.exact;
        let spec = |ec: f64, m: &ModeConfig| TransmonSpec { ec, squid: m.squid() };
        Ok(Model {
            q1: spec(energies.ec1, &self.q1),
            q2: spec(energies.ec2, &self.q2),
            coupler: spec(energies.ecc, &self.coupler),
            energies,
            bias: [
                self.q1.flux_bias_phi0,
                self.q2.flux_bias_phi0,
                self.coupler.flux_bias_phi0,
            ],
        })
    }
}

/// Transmons and charge couplings of a device, with DC biases in Φ0 ordered
/// (q1, q2, coupler).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model {
    pub q1: TransmonSpec,
    pub q2: TransmonSpec,
    pub coupler: TransmonSpec,
    pub energies: ChargeEnergies,
    pub bias: [f64; 3],
}

impl Model {
    pub fn specs(&self) -> [&TransmonSpec; 3] {
        [&self.q1, &self.q2, &self.coupler]
    }

    /// Three-body parameters at fluxes (q1, q2, coupler) in Φ0.
    pub fn params(&self, flux: [f64; 3]) -> Result<DeviceParams> {
        device_params(&self.energies, self.specs(), flux.map(flux_phase))
    }

    pub fn idle(&self) -> Result<DeviceParams> {
        self.params(self.bias)
    }

    /// Parameters with the coupler moved to `phi_c` and the qubits at bias.
    pub fn at_coupler(&self, phi_c: f64) -> Result<DeviceParams> {
        self.params([self.bias[0], self.bias[1], phi_c])
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (label, s) in [("q1", &self.q1), ("q2", &self.q2), ("coupler", &self.coupler)] {
            if let Some(w) = s.regime_warning() {
                out.push(format!("{label}: {w}"));
            }
        }
        out
    }
}
