//! Observation space and built-in ground-truth models.
//!
//! An event time `X` with joint density `f0(x, y)` for a continuous mark `Y`
//! is never observed directly. An independent inspection time `T` with
//! density `g` is drawn, and the record is `(T, Z)` with `Z = Y` when the
//! event happened by the inspection (`X <= T`) and `Z = 0` otherwise. Since
//! `P(Y = 0) = 0`, `Z = 0` encodes the censoring indicator exactly.
//!
//! The observation vector has density
//!
//! ```text
//! h(t, z) = g(t) * d2F(t, z)        for z > 0
//! h(t, 0) = g(t) * (1 - F_X(t))
//! ```
//!
//! with respect to the mixed measure `lambda` = (planar Lebesgue) +
//! (linear Lebesgue on the line z = 0); `d2F` is the partial derivative of
//! the joint CDF in the mark coordinate and `F_X` the marginal CDF of `X`.
//!
//! Two analytic models are built in for simulation and calibration:
//! `Uniform` (`f0 = 1`, `g = 1` on the unit square) and `Polynomial`
//! (`f0(x, y) = x + y`, `g(t) = 2t`).

use serde::{Deserialize, Serialize};

use crate::error::{CscmError, Result};

/// One record `(t, z)`. `z == 0` means the event had not yet occurred at the
/// inspection time `t`; `z > 0` is the observed mark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    t: f64,
    z: f64,
}

impl Observation {
    pub fn new(t: f64, z: f64) -> Result<Self> {
        if !t.is_finite() || !z.is_finite() || t < 0.0 || z < 0.0 {
            return Err(CscmError::InvalidArgument(format!(
                "observation needs finite t >= 0 and z >= 0, got (t={t}, z={z})"
            )));
        }
        Ok(Observation { t, z })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// True when the event had not occurred at inspection (`z == 0`).
    pub fn is_censored(&self) -> bool {
        self.z == 0.0
    }
}

/// An ordered collection of observations; always nonempty.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    obs: Vec<Observation>,
}

impl Sample {
    pub fn new(obs: Vec<Observation>) -> Result<Self> {
        if obs.is_empty() {
            return Err(CscmError::InvalidArgument(
                "sample must contain at least one observation".into(),
            ));
        }
        Ok(Sample { obs })
    }

    pub fn n(&self) -> usize {
        self.obs.len()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.obs.iter()
    }

    /// Default support bounds `(max t, max z)` used when none are given
    /// explicitly.
    pub fn support_bounds(&self) -> (f64, f64) {
        let m1 = self.obs.iter().map(|o| o.t).fold(0.0, f64::max);
        let m2 = self.obs.iter().map(|o| o.z).fold(0.0, f64::max);
        (m1, m2)
    }

    /// Reads the `t,z` CSV format. A third `delta` column, when present, is
    /// validated against the sign of `z` (`delta = 1` iff `z > 0`).
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        {
            let headers = rdr.headers()?;
            let cols: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
            let ok = (cols.len() == 2 && cols[0] == "t" && cols[1] == "z")
                || (cols.len() == 3 && cols[0] == "t" && cols[1] == "z" && cols[2] == "delta");
            if !ok {
                return Err(CscmError::InvalidArgument(format!(
                    "expected CSV header `t,z` (optionally `t,z,delta`), got {cols:?}"
                )));
            }
        }
        let mut obs = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let parse = |idx: usize| -> Result<f64> {
                record
                    .get(idx)
                    .ok_or_else(|| {
                        CscmError::InvalidArgument(format!("row {line}: missing column {idx}"))
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| CscmError::InvalidArgument(format!("row {line}: {e}")))
            };
            let t = parse(0)?;
            let z = parse(1)?;
            if record.len() > 2 {
                let delta = parse(2)?;
                let expected = if z > 0.0 { 1.0 } else { 0.0 };
                if delta != expected {
                    return Err(CscmError::InvalidArgument(format!(
                        "row {line}: delta column is {delta} but z = {z} encodes delta = {expected}"
                    )));
                }
            }
            obs.push(Observation::new(t, z)?);
        }
        Sample::new(obs)
    }

    pub fn from_csv_path<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Writes the `t,z` CSV format with 17 significant digits per value so
    /// that a round trip through the file is exact.
    pub fn to_csv_writer<W: std::io::Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "t,z")?;
        for o in &self.obs {
            writeln!(writer, "{:.16e},{:.16e}", o.t, o.z)?;
        }
        Ok(())
    }

    pub fn to_csv_path<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(std::io::BufWriter::new(file))
    }
}

/// The two built-in truth models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `f0(x, y) = 1` on the unit square, `g(t) = 1`.
    Uniform,
    /// `f0(x, y) = x + y` on the unit square, `g(t) = 2t`.
    Polynomial,
}

impl std::str::FromStr for ModelKind {
    type Err = CscmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ModelKind::Uniform),
            "polynomial" => Ok(ModelKind::Polynomial),
            other => Err(CscmError::InvalidArgument(format!(
                "unknown model `{other}` (expected `uniform` or `polynomial`)"
            ))),
        }
    }
}

/// A built-in model together with its (fixed) support bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    kind: ModelKind,
    support: (f64, f64),
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec { kind, support: (1.0, 1.0) }
    }

    pub fn uniform() -> Self {
        Self::new(ModelKind::Uniform)
    }

    pub fn polynomial() -> Self {
        Self::new(ModelKind::Polynomial)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Support bounds `(M1, M2)`; both 1 for the built-ins.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Joint CDF `F0(t, z)` in closed form. Arguments beyond the support are
    /// clamped to its boundary (the CDF is constant there).
    pub fn true_cdf(&self, t: f64, z: f64) -> f64 {
        let t = t.clamp(0.0, self.support.0);
        let z = z.clamp(0.0, self.support.1);
        match self.kind {
            ModelKind::Uniform => t * z,
            ModelKind::Polynomial => 0.5 * t * z * (t + z),
        }
    }

    /// Marginal CDF of the event time, `F_X(t) = F0(t, M2)`.
    pub fn marginal_cdf_x(&self, t: f64) -> f64 {
        self.true_cdf(t, self.support.1)
    }

    /// `d2F0(t, z)`: partial derivative of the CDF in the mark coordinate.
    pub fn d2_cdf(&self, t: f64, z: f64) -> f64 {
        if z > self.support.1 {
            return 0.0;
        }
        let t = t.clamp(0.0, self.support.0);
        match self.kind {
            ModelKind::Uniform => t,
            ModelKind::Polynomial => 0.5 * t * t + t * z,
        }
    }

    /// `d1F0(t, z)`: partial derivative of the CDF in the time coordinate.
    pub fn d1_cdf(&self, t: f64, z: f64) -> f64 {
        if t > self.support.0 {
            return 0.0;
        }
        let z = z.clamp(0.0, self.support.1);
        match self.kind {
            ModelKind::Uniform => z,
            ModelKind::Polynomial => t * z + 0.5 * z * z,
        }
    }

    /// `d1^2 F0(t, z)`: second partial in the time coordinate.
    pub fn d1d1_cdf(&self, t: f64, z: f64) -> f64 {
        if t > self.support.0 {
            return 0.0;
        }
        let z = z.clamp(0.0, self.support.1);
        match self.kind {
            ModelKind::Uniform => 0.0,
            ModelKind::Polynomial => z,
        }
    }

    /// Inspection-time density `g(t)`.
    pub fn censoring_density(&self, t: f64) -> f64 {
        if !(0.0..=self.support.0).contains(&t) {
            return 0.0;
        }
        match self.kind {
            ModelKind::Uniform => 1.0,
            ModelKind::Polynomial => 2.0 * t,
        }
    }

    /// Inspection-time CDF `G(t)`.
    pub fn censoring_cdf(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.support.0);
        match self.kind {
            ModelKind::Uniform => t,
            ModelKind::Polynomial => t * t,
        }
    }

    /// `g'(t)` on the interior of the support.
    pub fn censoring_density_slope(&self, _t: f64) -> f64 {
        match self.kind {
            ModelKind::Uniform => 0.0,
            ModelKind::Polynomial => 2.0,
        }
    }

    /// Density of the observation vector with respect to the mixed measure:
    /// `g(t) * d2F0(t, z)` for `z > 0` and `g(t) * (1 - F_X(t))` on the line
    /// `z = 0`.
    pub fn observation_density(&self, t: f64, z: f64) -> f64 {
        let g = self.censoring_density(t);
        if z > 0.0 {
            g * self.d2_cdf(t, z)
        } else {
            g * (1.0 - self.marginal_cdf_x(t))
        }
    }

    /// Inverse-CDF draw of an event pair `(x, y)` from two uniforms.
    ///
    /// Uniform model: both coordinates are the uniforms themselves.
    /// Polynomial model: `x` solves `x^2 + x - 2 u1 = 0` (marginal CDF
    /// `(x^2 + x) / 2`) and `y | x` solves `y^2 / 2 + x y - u2 (x + 1/2) = 0`.
    pub(crate) fn event_from_uniforms(&self, u1: f64, u2: f64) -> (f64, f64) {
        match self.kind {
            ModelKind::Uniform => (u1, u2),
            ModelKind::Polynomial => {
                let x = 0.5 * ((1.0 + 8.0 * u1).sqrt() - 1.0);
                let y = (x * x + u2 * (2.0 * x + 1.0)).sqrt() - x;
                (x, y)
            }
        }
    }

    /// Inverse-CDF draw of an inspection time from one uniform.
    pub(crate) fn inspection_from_uniform(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::Uniform => u,
            ModelKind::Polynomial => u.sqrt(),
        }
    }
}
