//! Flux pulses, operational flux crosstalk and the modulation transfer
//! function.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxLine {
    Q1,
    Coupler,
    Q2,
}

/// Φ(t) = Φdc + A·u(t)·sin(2π·f_p·t + φ_p) with a flat-top envelope u and
/// raised-cosine edges. Flux in Φ0, time in ns, frequency in GHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxPulse {
    pub phi_dc: f64,
    pub amplitude: f64,
    pub mod_freq: f64,
    pub phase: f64,
    pub duration: f64,
    pub ramp: f64,
    pub line: FluxLine,
}

impl FluxPulse {
    /// Sinusoidal modulation about `phi_dc`.
    pub fn modulated(line: FluxLine, phi_dc: f64, amplitude: f64, mod_freq: f64, duration: f64, ramp: f64) -> Self {
        FluxPulse {
            phi_dc,
            amplitude,
            mod_freq,
            phase: 0.0,
            duration,
            ramp,
            line,
        }
    }

    /// Fast-flux step from `phi_dc` to `phi_dc + amplitude` with the same
    /// raised-cosine edges.
    pub fn step(line: FluxLine, phi_dc: f64, amplitude: f64, duration: f64, ramp: f64) -> Self {
        FluxPulse {
            phi_dc,
            amplitude,
            mod_freq: 0.0,
            phase: PI / 2.0,
            duration,
            ramp,
            line,
        }
    }

    /// A pulse that holds `phi_dc`.
    pub fn idle(line: FluxLine, phi_dc: f64, duration: f64) -> Self {
        Self::step(line, phi_dc, 0.0, duration, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.phi_dc,
            self.amplitude,
            self.mod_freq,
            self.phase,
            self.duration,
            self.ramp,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("flux pulse", "non-finite field"));
        }
        if self.ramp < 0.0 || self.duration < 2.0 * self.ramp {
            return Err(Error::invalid(
                "flux pulse",
                format!(
                    "need duration >= 2·ramp >= 0 (duration {}, ramp {})",
                    self.duration, self.ramp
                ),
            ));
        }
        if self.mod_freq < 0.0 {
            return Err(Error::invalid("flux pulse", "modulation frequency must be >= 0"));
        }
        Ok(())
    }

    /// Flat-top envelope with raised-cosine edges; 0 outside the pulse.
    pub fn envelope(&self, t: f64) -> f64 {
        let (d, r) = (self.duration, self.ramp);
        if t < 0.0 || t > d {
            return 0.0;
        }
        if r <= 0.0 {
            return 1.0;
        }
        if t < r {
            0.5 * (1.0 - (PI * t / r).cos())
        } else if t > d - r {
            0.5 * (1.0 - (PI * (d - t) / r).cos())
        } else {
            1.0
        }
    }

    /// Carrier sin(2π·f_p·t + φ_p).
    pub fn carrier(&self, t: f64) -> f64 {
        (2.0 * PI * self.mod_freq * t + self.phase).sin()
    }

    /// Flux without the envelope, i.e. the steady modulation of the flat top.
    pub fn flat_top(&self, t: f64) -> f64 {
        self.phi_dc + self.amplitude * self.carrier(t)
    }

    /// Flux at time `t`, which is clamped to the pulse window; equals `phi_dc`
    /// at both ends.
    pub fn value(&self, t: f64) -> f64 {
        self.phi_dc + self.amplitude * self.envelope(t) * self.carrier(t)
    }

    pub fn instantaneous_flux(&self, t: f64) -> Result<f64> {
        let slack = 1e-9 * self.duration.max(1.0);
        if !(t >= -slack && t <= self.duration + slack) {
            return Err(Error::TimeOutOfRange {
                t,
                duration: self.duration,
            });
        }
        Ok(self.value(t.clamp(0.0, self.duration)))
    }

    /// Duration of the flat top.
    pub fn flat_duration(&self) -> f64 {
        self.duration - 2.0 * self.ramp
    }
}

/// Operational crosstalk matrix: `matrix[(i, j)]` is the ratio of the bias
/// currents on line i and line j producing the same flux in loop i.
#[derive(Clone, Debug, PartialEq)]
pub struct CrosstalkMatrix {
    pub labels: Vec<String>,
    pub matrix: DMatrix<f64>,
}

impl CrosstalkMatrix {
    pub fn new(labels: Vec<String>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n || labels.len() != n {
            return Err(Error::invalid(
                "crosstalk matrix",
                format!(
                    "need a square matrix with one label per line ({}x{}, {} labels)",
                    n,
                    matrix.ncols(),
                    labels.len()
                ),
            ));
        }
        for i in 0..n {
            if (matrix[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(
                    "crosstalk matrix",
                    format!("diagonal entry {i} is {} (must be 1)", matrix[(i, i)]),
                ));
            }
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("crosstalk matrix", "non-finite entry"));
        }
        Ok(CrosstalkMatrix { labels, matrix })
    }

    /// The matrix measured on the reference device, lines (q1, coupler, q2).
    pub fn reference() -> Self {
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(3, 3, &[
            1.0, -0.471, 0.392,
            -0.226, 1.0, 0.248,
            0.378, -0.479, 1.0,
        ]);
        Self::new(vec!["q1".into(), "coupler".into(), "q2".into()], m).expect("valid reference matrix")
    }

    /// 2-norm condition number.
    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix.clone().singular_values();
        sv.max() / sv.min()
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        if !(self.condition_number() < 1e12) {
            return Err(Error::Singular("crosstalk matrix"));
        }
        self.matrix
            .clone()
            .try_inverse()
            .ok_or(Error::Singular("crosstalk matrix"))
    }

    /// Source settings s with C·s = target.
    pub fn compensate(&self, target: &DVector<f64>) -> Result<DVector<f64>> {
        if target.len() != self.matrix.nrows() {
            return Err(Error::invalid(
                "flux target",
                format!("expected {} entries, got {}", self.matrix.nrows(), target.len()),
            ));
        }
        let lu = self.matrix.clone().lu();
        if !(self.condition_number() < 1e12) {
            return Err(Error::Singular("crosstalk matrix"));
        }
        lu.solve(target).ok_or(Error::Singular("crosstalk matrix"))
    }

    /// Crosstalk seen after driving the lines through the inverse of
    /// `measured`, when the device actually has crosstalk `self`.
    pub fn residual_after(&self, measured: &CrosstalkMatrix) -> Result<DMatrix<f64>> {
        Ok(&self.matrix * measured.inverse()?)
    }

    /// Reads a CSV with a `line` column of labels followed by one column per
    /// line.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text, &path.display().to_string())
    }

    pub fn from_csv_str(text: &str, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let csv_err = |line: usize, reason: String| Error::Csv {
            path: source.to_string(),
            line,
            reason,
        };
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_err(1, e.to_string()))?
            .iter()
            .skip(1)
            .map(str::to_string)
            .collect();
        let n = header.len();
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != n + 1 {
                return Err(csv_err(line, format!("expected {} fields, got {}", n + 1, rec.len())));
            }
            labels.push(rec[0].to_string());
            for f in rec.iter().skip(1) {
                values.push(f.parse::<f64>().map_err(|e| csv_err(line, format!("{f:?}: {e}")))?);
            }
        }
        if labels != header {
            return Err(csv_err(1, "row labels must match the column header".into()));
        }
        Self::new(labels, DMatrix::from_row_slice(n, n, &values))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("line");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for j in 0..self.labels.len() {
                out.push_str(&format!(",{}", self.matrix[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

/// Operational crosstalk from flux periods. `own_periods[i]` is the current
/// period of loop i swept with its own line; `cross_periods[(i, j)]` the
/// period of loop i swept with line j (infinite when there is no response);
/// `signs[(i, j)]` the sign of the frequency response.
pub fn crosstalk_from_periods(
    labels: Vec<String>,
    own_periods: &[f64],
    cross_periods: &DMatrix<f64>,
    signs: &DMatrix<f64>,
) -> Result<CrosstalkMatrix> {
    let n = own_periods.len();
    if cross_periods.shape() != (n, n) || signs.shape() != (n, n) {
        return Err(Error::invalid("crosstalk periods", "shape mismatch"));
    }
    if own_periods.iter().any(|p| !(*p > 0.0)) || cross_periods.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::invalid("crosstalk periods", "all periods must be positive"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            signs[(i, j)].signum() * own_periods[i] / cross_periods[(i, j)]
        }
    });
    CrosstalkMatrix::new(labels, m)
}

/// Periods produced by a device whose loop i picks up `mutual[(i, j)]` flux
/// quanta per unit current on line j. Returns (own periods, cross periods,
/// signs); a zero mutual gives an infinite period.
pub fn periods_from_mutuals(mutual: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = mutual.nrows();
    let own = (0..n).map(|i| 1.0 / mutual[(i, i)].abs()).collect();
    let cross = mutual.map(|m| if m == 0.0 { f64::INFINITY } else { 1.0 / m.abs() });
    let signs = mutual.map(|m| if m < 0.0 { -1.0 } else { 1.0 });
    (own, cross, signs)
}

/// Ratio of achieved to requested modulation amplitude versus modulation
/// frequency (GHz).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferTable {
    pub points: Vec<(f64, f64)>,
}

const BUNDLED_TRANSFER: &str = include_str!("../data/transfer_function.csv");

impl TransferTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("transfer table", "need at least two knots"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid(
                    "transfer table",
                    format!("frequencies must be strictly increasing ({} then {})", w[0].0, w[1].0),
                ));
            }
        }
        if let Some(&(f, r)) = points.iter().find(|(_, r)| !(*r > 0.0 && *r <= 1.5)) {
            return Err(Error::invalid(
                "transfer table",
                format!("ratio {r} at {f} GHz outside (0, 1.5]"),
            ));
        }
        Ok(TransferTable { points })
    }

    /// Synthetic example table shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_TRANSFER, "transfer_function.csv").expect("valid bundled table")
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text, &path.display().to_string())
    }

    /// Two columns `mod_freq_ghz,ratio` with a header row; `#` comments.
    pub fn from_csv_str(text: &str, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Csv {
                path: source.to_string(),
                line: e.position().map_or(0, |p| p.line() as usize),
                reason: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Csv {
                        path: source.to_string(),
                        line,
                        reason: format!("missing column {k}"),
                    })?
                    .parse::<f64>()
                    .map_err(|e| Error::Csv {
                        path: source.to_string(),
                        line,
                        reason: e.to_string(),
                    })
            };
            points.push((field(0)?, field(1)?));
        }
        Self::new(points)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    pub fn ratio(&self, mod_freq: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(mod_freq >= lo && mod_freq <= hi) {
            return Err(Error::OutOfTable { f: mod_freq, lo, hi });
        }
        let k = self
            .points
            .partition_point(|&(f, _)| f <= mod_freq)
            .clamp(1, self.points.len() - 1);
        let (f0, r0) = self.points[k - 1];
        let (f1, r1) = self.points[k];
        Ok(r0 + (r1 - r0) * (mod_freq - f0) / (f1 - f0))
    }

    pub fn apply(&self, requested_amp: f64, mod_freq: f64) -> Result<f64> {
        Ok(requested_amp * self.ratio(mod_freq)?)
    }
}
