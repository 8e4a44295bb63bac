//! Value types for a series in its three representations.
//!
//! All three are `N x M` matrices: rows index time steps (or frequencies),
//! columns index features. Frequency operations act on each column
//! independently.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Representation a model diffuses in, or a metric is computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Time,
    Frequency,
}

impl Domain {
    pub const BOTH: [Domain; 2] = [Domain::Time, Domain::Frequency];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Time => "time",
            Domain::Frequency => "frequency",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(Domain::Time),
            "frequency" | "freq" => Ok(Domain::Frequency),
            other => Err(Error::Value(format!(
                "unknown domain {other:?} (expected time or frequency)"
            ))),
        }
    }
}

fn check_shape(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 {
        return Err(Error::Shape("N ≥ 1 violated".into()));
    }
    if cols == 0 {
        return Err(Error::Shape("M ≥ 1 violated".into()));
    }
    Ok(())
}

/// A real multivariate series, `N` time steps by `M` features.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries(Array2<f64>);

impl TimeSeries {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        check_shape(values.nrows(), values.ncols())?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "time series entry",
                location: format!("flat index {pos}"),
            });
        }
        Ok(Self(values))
    }

    /// Builds a single-feature series.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column"))
    }

    /// Builds a series from a row-major flat buffer of length `n * m`.
    pub fn from_flat(n: usize, m: usize, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != n * m {
            return Err(Error::Shape(format!(
                "flat buffer of length {} cannot hold {n}x{m}",
                flat.len()
            )));
        }
        Self::new(Array2::from_shape_vec((n, m), flat).expect("length checked"))
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self(Array2::zeros((n, m)))
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.0.nrows(), self.0.ncols())
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Row-major flattening (time-major, features fastest).
    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }

    /// Squared Frobenius norm, the total signal energy.
    pub fn energy(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

/// A complex `N x M` spectrum satisfying the mirror symmetry of a real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSeries(Array2<Complex64>);

impl SpectralSeries {
    /// Wraps a spectrum after checking the mirror symmetry to `tolerance`.
    pub fn new(values: Array2<Complex64>, tolerance: f64) -> Result<Self> {
        check_shape(values.nrows(), values.ncols())?;
        let deviation = mirror_deviation(&values);
        if !(deviation <= tolerance) {
            return Err(Error::Symmetry {
                deviation,
                tolerance,
            });
        }
        Ok(Self(values))
    }

    /// Wraps a spectrum without checking the symmetry. The caller is
    /// responsible for the invariant (used by constructions that hold it
    /// exactly, such as the inverse chart).
    pub(crate) fn new_unchecked(values: Array2<Complex64>) -> Self {
        Self(values)
    }

    /// Wraps an arbitrary complex matrix for operations that validate the
    /// symmetry themselves (e.g. `idft`).
    pub fn from_raw(values: Array2<Complex64>) -> Result<Self> {
        check_shape(values.nrows(), values.ncols())?;
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<Complex64> {
        self.0
    }

    /// Largest `|x_k - conj(x_{(N-k) mod N})|` over all entries.
    pub fn mirror_deviation(&self) -> f64 {
        mirror_deviation(&self.0)
    }

    /// Sum of squared moduli.
    pub fn energy(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }
}

pub(crate) fn mirror_deviation(values: &Array2<Complex64>) -> f64 {
    let n = values.nrows();
    let mut worst = 0.0f64;
    for k in 0..n {
        let mirror = (n - k) % n;
        for (a, b) in values.row(k).iter().zip(values.row(mirror).iter()) {
            let d = (a - b.conj()).norm();
            if d > worst || d.is_nan() {
                worst = d;
            }
        }
    }
    worst
}

/// Unconstrained real coordinates of a mirror-symmetric spectrum.
///
/// Rows hold `Re x_0 .. Re x_{floor(N/2)}` followed by the imaginary parts of
/// the interior frequencies, so the length along the frequency axis is `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiVector(Array2<f64>);

impl PhiVector {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        check_shape(values.nrows(), values.ncols())?;
        Ok(Self(values))
    }

    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column"))
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self(Array2::zeros((n, m)))
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.0.nrows(), self.0.ncols())
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_degenerate_shapes() {
        let err = TimeSeries::new(Array2::zeros((0, 1))).unwrap_err();
        assert!(err.to_string().contains("N ≥ 1 violated"));
        let err = TimeSeries::new(Array2::zeros((3, 0))).unwrap_err();
        assert!(err.to_string().contains("M ≥ 1 violated"));
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(TimeSeries::new(array![[1.0], [f64::NAN]]).is_err());
        assert!(TimeSeries::new(array![[f64::INFINITY]]).is_err());
    }

    #[test]
    fn spectral_symmetry_is_checked() {
        let c = Complex64::new;
        let good = array![[c(5.0, 0.0)], [c(-1.0, 1.0)], [c(-1.0, 0.0)], [c(-1.0, -1.0)]];
        assert!(SpectralSeries::new(good, 1e-12).is_ok());
        let bad = array![[c(5.0, 0.0)], [c(-1.0, 1.0)], [c(-1.0, 0.0)], [c(-1.0, 1.0)]];
        assert!(matches!(
            SpectralSeries::new(bad, 1e-12),
            Err(Error::Symmetry { .. })
        ));
    }

    #[test]
    fn domain_parses() {
        assert_eq!("time".parse::<Domain>().unwrap(), Domain::Time);
        assert_eq!("frequency".parse::<Domain>().unwrap(), Domain::Frequency);
        assert!("space".parse::<Domain>().is_err());
    }
}
