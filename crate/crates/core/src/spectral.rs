//! Unitary DFT along the time axis, the mirror-symmetric coordinate chart,
//! and the diagonal noise scaling of the frequency-domain SDE.
//!
//! The transform uses the `1/sqrt(N)` normalization on both directions so
//! that it is unitary and preserves the energy of a series:
//!
//! ```text
//! x~_k = N^{-1/2} sum_t x_t exp(-2 pi i k t / N)
//! ```
//!
//! A real series has `x~_k = conj(x~_{N-k})`, so only `N` real numbers are
//! free. The chart [`phi`] extracts them as
//! `(Re x~_0, .., Re x~_{floor(N/2)}, Im x~_1, .., Im x~_{ceil(N/2)-1})`
//! and [`phi_inv`] rebuilds the full spectrum.

use std::cell::RefCell;
use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::series::{PhiVector, SpectralSeries, TimeSeries};

/// Mirror-symmetry tolerance accepted by [`idft`] on its input.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
/// Largest imaginary part tolerated in a reconstructed real series.
pub const RESIDUE_TOLERANCE: f64 = 1e-8;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform_columns(values: &mut Array2<Complex64>, inverse: bool) {
    let n = values.nrows();
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    let scale = 1.0 / (n as f64).sqrt();
    let mut buffer = vec![Complex64::new(0.0, 0.0); n];
    for mut column in values.axis_iter_mut(Axis(1)) {
        for (b, v) in buffer.iter_mut().zip(column.iter()) {
            *b = *v;
        }
        fft.process(&mut buffer);
        for (v, b) in column.iter_mut().zip(buffer.iter()) {
            *v = b * scale;
        }
    }
}

/// Unitary DFT of each feature column.
pub fn dft(ts: &TimeSeries) -> SpectralSeries {
    let mut values = ts.values().mapv(|v| Complex64::new(v, 0.0));
    transform_columns(&mut values, false);
    // Pin the self-conjugate bins to the real axis; the FFT leaves ~1e-17 there.
    let n = values.nrows();
    for mut row in values.axis_iter_mut(Axis(0)).take(1) {
        row.mapv_inplace(|z| Complex64::new(z.re, 0.0));
    }
    if n % 2 == 0 {
        values
            .row_mut(n / 2)
            .mapv_inplace(|z| Complex64::new(z.re, 0.0));
    }
    SpectralSeries::new_unchecked(values)
}

/// Inverse unitary DFT. Fails if the spectrum is not the transform of a real
/// series, detected through the imaginary residue of the reconstruction.
pub fn idft(spec: &SpectralSeries) -> Result<TimeSeries> {
    let mut values = spec.values().clone();
    transform_columns(&mut values, true);
    let residue = values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if !(residue <= RESIDUE_TOLERANCE) {
        return Err(Error::ImaginaryResidue {
            residue,
            tolerance: RESIDUE_TOLERANCE,
        });
    }
    TimeSeries::new(values.mapv(|z| z.re))
}

/// Index of the last real-part row in the chart, `floor(N/2)`.
fn half(n: usize) -> usize {
    n / 2
}

/// Number of frequencies with an independent imaginary part.
fn interior_count(n: usize) -> usize {
    n - half(n) - 1
}

/// Extracts the unconstrained real coordinates of a symmetric spectrum.
pub fn phi(spec: &SpectralSeries) -> PhiVector {
    let values = spec.values();
    let n = values.nrows();
    let h = half(n);
    let mut out = Array2::<f64>::zeros(values.raw_dim());
    for k in 0..=h {
        out.row_mut(k).assign(&values.row(k).mapv(|z| z.re));
    }
    for k in 1..=interior_count(n) {
        out.row_mut(h + k).assign(&values.row(k).mapv(|z| z.im));
    }
    PhiVector::new(out).expect("shape inherited from a valid spectrum")
}

/// Rebuilds the full mirror-symmetric spectrum from chart coordinates.
pub fn phi_inv(pv: &PhiVector) -> SpectralSeries {
    let z = pv.values();
    let n = z.nrows();
    let h = half(n);
    let mut out = Array2::<Complex64>::zeros(z.raw_dim());
    out.row_mut(0).assign(&z.row(0).mapv(|v| Complex64::new(v, 0.0)));
    for k in 1..=interior_count(n) {
        for j in 0..z.ncols() {
            let value = Complex64::new(z[[k, j]], z[[h + k, j]]);
            out[[k, j]] = value;
            out[[n - k, j]] = value.conj();
        }
    }
    if n % 2 == 0 && n > 0 {
        out.row_mut(h)
            .assign(&z.row(h).mapv(|v| Complex64::new(v, 0.0)));
    }
    SpectralSeries::new_unchecked(out)
}

/// Chart coordinates of the spectrum of a real series, `phi(dft(x))`.
pub fn to_phi(ts: &TimeSeries) -> PhiVector {
    phi(&dft(ts))
}

/// Real series with the given chart coordinates, `idft(phi_inv(z))`.
pub fn from_phi(pv: &PhiVector) -> Result<TimeSeries> {
    idft(&phi_inv(pv))
}

/// Diagonal of the noise scaling matrix: 1 on the self-conjugate
/// frequencies (0, and N/2 for even N), `1/sqrt(2)` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaScaling {
    diag: Vec<f64>,
}

impl LambdaScaling {
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `diag^power` as a vector.
    pub fn powi(&self, power: i32) -> Vec<f64> {
        self.diag.iter().map(|d| d.powi(power)).collect()
    }

    /// Multiplies each chart row `k` by `diag[k]^power`.
    pub fn apply(&self, values: &mut Array2<f64>, power: i32) {
        assert_eq!(values.nrows(), self.diag.len(), "lambda/row mismatch");
        for (mut row, d) in values.axis_iter_mut(Axis(0)).zip(&self.diag) {
            let s = d.powi(power);
            row.mapv_inplace(|v| v * s);
        }
    }
}

pub fn lambda_scaling(n: usize) -> LambdaScaling {
    let diag = (0..n)
        .map(|k| {
            if k == 0 || (n % 2 == 0 && k == n / 2) {
                1.0
            } else {
                std::f64::consts::FRAC_1_SQRT_2
            }
        })
        .collect();
    LambdaScaling { diag }
}

/// Dense DFT matrix `U[k, t] = N^{-1/2} exp(-2 pi i k t / N)`.
pub fn dft_matrix(n: usize) -> Array2<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    Array2::from_shape_fn((n, n), |(k, t)| {
        // Reduce the phase index first to keep the angle small and exact.
        let idx = (k * t) % n;
        let angle = -2.0 * PI * idx as f64 / n as f64;
        Complex64::from_polar(scale, angle)
    })
}

/// Max-abs deviation of `U U*` from the identity.
pub fn unitarity_check(n: usize) -> f64 {
    let u = dft_matrix(n);
    let rows: Vec<&[Complex64]> = u
        .outer_iter()
        .map(|r| r.to_slice().expect("standard layout"))
        .collect();
    let mut worst = 0.0f64;
    // U U* is Hermitian, so the upper triangle covers every entry.
    for i in 0..n {
        for j in i..n {
            let acc: Complex64 = rows[i].iter().zip(rows[j]).map(|(a, b)| a * b.conj()).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((acc - target).norm());
        }
    }
    worst
}

/// Real `N x N` matrix `Q` with `Q x = phi(U x)` for a single feature column.
pub fn chart_matrix(n: usize) -> Array2<f64> {
    let u = dft_matrix(n);
    let h = half(n);
    let mut q = Array2::<f64>::zeros((n, n));
    for k in 0..=h {
        q.row_mut(k).assign(&u.row(k).mapv(|z| z.re));
    }
    for k in 1..=interior_count(n) {
        q.row_mut(h + k).assign(&u.row(k).mapv(|z| z.im));
    }
    q
}
