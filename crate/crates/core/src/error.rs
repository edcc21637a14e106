use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate capacitance network")]
    DegenerateNetwork,

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("coupler resonance; dispersive elimination invalid ({detail})")]
    CouplerResonance { detail: String },

    #[error("sideband n = {n} resonant with the coupler; dispersive elimination invalid")]
    SidebandResonance { n: i32 },

    #[error("no avoided crossing found in sweep window [{lo:.6}, {hi:.6}] GHz")]
    NoCrossing { lo: f64, hi: f64 },

    #[error("time {t} ns outside pulse window [0, {duration}] ns")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("frequency {f} GHz outside transfer table range [{lo}, {hi}] GHz")]
    OutOfTable { f: f64, lo: f64, hi: f64 },

    #[error("unitarity drift {drift:.3e} exceeds {tol:.1e}; reduce dt")]
    UnitarityDrift { drift: f64, tol: f64 },

    #[error("quadrature did not converge: change {achieved:.3e} exceeds {tol:.1e}")]
    Quadrature { achieved: f64, tol: f64 },

    #[error("fit did not converge (residual norm {residual:.3e})")]
    FitFailed { residual: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("resonance unreachable: target {target:.6} GHz outside reachable band [{lo:.6}, {hi:.6}] GHz")]
    ResonanceUnreachable { target: f64, lo: f64, hi: f64 },

    #[error("no local maximum inside the chevron grid")]
    NoInteriorMaximum,

    #[error("ill-conditioned virtual-Z extraction: |<{state}|U|{state}>| = {magnitude:.3e}")]
    IllConditioned { state: &'static str, magnitude: f64 },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("csv {path}: line {line}: {reason}")]
    Csv { path: String, line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}

/// Attach a pipeline stage label to an error.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
