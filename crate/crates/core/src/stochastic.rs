//! Seeded random streams, Brownian increments, and mirrored Brownian
//! increments (the image of a real Brownian motion under the unitary DFT).
//!
//! A mirrored increment over `dt` has a real `N(0, dt)` component at
//! frequency 0 (and at `N/2` for even `N`), independent real and imaginary
//! parts of variance `dt/2` on the interior frequencies, mutually independent
//! frequency blocks, and the conjugate mirror `v_k = conj(v_{N-k})`.
//!
//! Increments are drawn in chart coordinates, scaled by the diagonal
//! [`LambdaScaling`](crate::spectral::LambdaScaling), and mapped back with
//! [`phi_inv`](crate::spectral::phi_inv), so the symmetry holds exactly.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{PhiVector, SpectralSeries};
use crate::spectral::{lambda_scaling, phi, phi_inv};

/// Deterministic random stream identified by `(seed, stream)`.
///
/// Distinct stream ids select non-overlapping ChaCha8 keystreams for the
/// same seed.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child stream determined by `(seed, stream, id)` only, independent of
    /// how much of this stream has been consumed.
    pub fn substream(&self, id: u64) -> Rng {
        let key = splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x5851_f42d)));
        Rng::new(key, id)
    }

    /// Child stream keyed by the next draw of this stream.
    pub fn split(&mut self) -> Rng {
        let key = self.inner.next_u64();
        Rng::new(key, 0)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        (self.uniform() * n as f64) as usize % n
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || self.normal())
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::Value(format!("increment length dt must be > 0, got {dt}")))
    }
}

/// Real Brownian increment: i.i.d. `N(0, dt)` entries.
pub fn gauss_increment(shape: (usize, usize), dt: f64, rng: &mut Rng) -> Result<Array2<f64>> {
    check_dt(dt)?;
    let scale = dt.sqrt();
    Ok(rng.normal_matrix(shape.0, shape.1).mapv_into(|v| v * scale))
}

/// Increment of a mirrored Brownian motion over `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct MirroredIncrement {
    values: SpectralSeries,
    dt: f64,
}

impl MirroredIncrement {
    pub fn values(&self) -> &SpectralSeries {
        &self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn into_spectrum(self) -> SpectralSeries {
        self.values
    }
}

/// Chart rows that belong to each independent frequency block.
fn frequency_blocks(n: usize) -> Vec<Vec<usize>> {
    let h = n / 2;
    let interior = n - h - 1;
    let mut blocks = vec![vec![0]];
    for k in 1..=interior {
        blocks.push(vec![k, h + k]);
    }
    if n % 2 == 0 && n > 1 {
        blocks.push(vec![h]);
    }
    blocks
}

/// Standard normal chart coordinates with one substream per frequency block.
fn blockwise_normal(n: usize, m: usize, rng: &mut Rng) -> Array2<f64> {
    let key = rng.next_u64();
    let mut eps = Array2::<f64>::zeros((n, m));
    for (b, rows) in frequency_blocks(n).into_iter().enumerate() {
        let mut sub = Rng::new(key, b as u64);
        for row in rows {
            for j in 0..m {
                eps[[row, j]] = sub.normal();
            }
        }
    }
    eps
}

/// Draws a mirrored Brownian increment: `phi_inv(sqrt(dt) * Lambda * eps)`
/// with `eps` standard normal in chart coordinates.
pub fn mirrored_increment(n: usize, m: usize, dt: f64, rng: &mut Rng) -> Result<MirroredIncrement> {
    check_dt(dt)?;
    if n == 0 || m == 0 {
        return Err(Error::Shape("mirrored increment needs N ≥ 1 and M ≥ 1".into()));
    }
    let mut eps = blockwise_normal(n, m, rng);
    lambda_scaling(n).apply(&mut eps, 1);
    eps.mapv_inplace(|v| v * dt.sqrt());
    let values = phi_inv(&PhiVector::new(eps)?);
    Ok(MirroredIncrement { values, dt })
}

/// Empirical vs. theoretical variance of one real component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceCheck {
    pub t: f64,
    pub frequency: usize,
    pub part: String,
    pub feature: usize,
    pub empirical: f64,
    pub theory: f64,
    pub ratio: f64,
}

/// Statistical self-check of the mirrored Brownian motion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsReport {
    pub n: usize,
    pub m: usize,
    pub n_paths: usize,
    pub t_grid: Vec<f64>,
    pub seed: u64,
    pub variance_tolerance: f64,
    pub correlation_tolerance: f64,
    pub variances: Vec<VarianceCheck>,
    pub max_variance_ratio_error: f64,
    /// Largest |corr(Re v_k, Im v_k)| over interior frequencies and grid times.
    pub max_re_im_correlation: f64,
    /// Largest |corr| between components of distinct frequency blocks.
    pub max_cross_block_correlation: f64,
    /// Largest |corr| between increments of one component over disjoint intervals.
    pub max_increment_correlation: f64,
    pub max_mirror_deviation: f64,
    pub variances_pass: bool,
    pub correlations_pass: bool,
    pub mirror_pass: bool,
    pub pass: bool,
}

fn correlation(sxy: f64, sx: f64, sy: f64, sxx: f64, syy: f64, n: f64) -> f64 {
    let cov = sxy / n - (sx / n) * (sy / n);
    let vx = sxx / n - (sx / n).powi(2);
    let vy = syy / n - (sy / n).powi(2);
    if vx <= 0.0 || vy <= 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Simulates `n_paths` mirrored Brownian paths on `t_grid` and compares their
/// statistics with the theoretical structure.
pub fn mirrored_stats_check(
    n: usize,
    m: usize,
    n_paths: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<StatsReport> {
    const VAR_TOL: f64 = 0.03;
    const CORR_TOL: f64 = 0.02;
    if n_paths < 10_000 {
        return Err(Error::Value(format!("n_paths ≥ 10⁴ required, got {n_paths}")));
    }
    if n == 0 || m == 0 {
        return Err(Error::Shape("N ≥ 1 and M ≥ 1 required".into()));
    }
    if t_grid.is_empty() || t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Value("t_grid must be nonempty, positive and increasing".into()));
    }

    let d = n * m;
    let g = t_grid.len();
    let lambda2 = lambda_scaling(n).powi(2);
    let h = n / 2;
    let blocks = frequency_blocks(n);
    // Block and frequency of each chart row.
    let mut row_block = vec![0usize; n];
    for (b, rows) in blocks.iter().enumerate() {
        for &r in rows {
            row_block[r] = b;
        }
    }
    let row_frequency = |row: usize| if row <= h { row } else { row - h };

    let mut s1 = vec![0.0; g * d];
    let mut s2 = vec![0.0; g * d * d];
    let mut inc_s1 = vec![0.0; g * d];
    let mut inc_s2 = vec![0.0; g * d];
    let mut inc_cross = vec![0.0; g * g * d];
    let mut max_mirror = 0.0f64;

    let root = Rng::new(seed, 0);
    let mut cumulative = Array2::<Complex64>::zeros((n, m));
    let mut coords = vec![0.0; g * d];
    let mut increments = vec![0.0; g * d];
    for path in 0..n_paths {
        let mut rng = root.substream(path as u64);
        cumulative.fill(Complex64::new(0.0, 0.0));
        let mut prev = 0.0;
        for (gi, &t) in t_grid.iter().enumerate() {
            let inc = mirrored_increment(n, m, t - prev, &mut rng)?;
            prev = t;
            cumulative += inc.values().values();
            let state = SpectralSeries::new_unchecked(cumulative.clone());
            max_mirror = max_mirror.max(state.mirror_deviation());
            let z = phi(&state);
            let dz = phi(inc.values());
            for (a, (zv, dv)) in z.values().iter().zip(dz.values().iter()).enumerate() {
                coords[gi * d + a] = *zv;
                increments[gi * d + a] = *dv;
            }
        }
        for gi in 0..g {
            let c = &coords[gi * d..(gi + 1) * d];
            for a in 0..d {
                s1[gi * d + a] += c[a];
                for b in 0..d {
                    s2[(gi * d + a) * d + b] += c[a] * c[b];
                }
                let ia = increments[gi * d + a];
                inc_s1[gi * d + a] += ia;
                inc_s2[gi * d + a] += ia * ia;
                for gj in (gi + 1)..g {
                    inc_cross[(gi * g + gj) * d + a] += ia * increments[gj * d + a];
                }
            }
        }
    }

    let np = n_paths as f64;
    let mut variances = Vec::new();
    let mut max_ratio_err = 0.0f64;
    let mut max_re_im = 0.0f64;
    let mut max_cross = 0.0f64;
    for (gi, &t) in t_grid.iter().enumerate() {
        for a in 0..d {
            let (row, feature) = (a / m, a % m);
            let mean = s1[gi * d + a] / np;
            let var = s2[(gi * d + a) * d + a] / np - mean * mean;
            let theory = t * lambda2[row_frequency(row)];
            let ratio = var / theory;
            max_ratio_err = max_ratio_err.max((ratio - 1.0).abs());
            variances.push(VarianceCheck {
                t,
                frequency: row_frequency(row),
                part: if row <= h { "re" } else { "im" }.to_string(),
                feature,
                empirical: var,
                theory,
                ratio,
            });
            for b in (a + 1)..d {
                let rb = b / m;
                let r = correlation(
                    s2[(gi * d + a) * d + b],
                    s1[gi * d + a],
                    s1[gi * d + b],
                    s2[(gi * d + a) * d + a],
                    s2[(gi * d + b) * d + b],
                    np,
                )
                .abs();
                if row_block[row] != row_block[rb] {
                    max_cross = max_cross.max(r);
                } else if a % m == b % m {
                    // Same block, same feature: the Re/Im pair of one frequency.
                    max_re_im = max_re_im.max(r);
                } else {
                    // Distinct features are independent Brownian motions.
                    max_cross = max_cross.max(r);
                }
            }
        }
    }
    let mut max_inc = 0.0f64;
    for gi in 0..g {
        for gj in (gi + 1)..g {
            for a in 0..d {
                let r = correlation(
                    inc_cross[(gi * g + gj) * d + a],
                    inc_s1[gi * d + a],
                    inc_s1[gj * d + a],
                    inc_s2[gi * d + a],
                    inc_s2[gj * d + a],
                    np,
                )
                .abs();
                max_inc = max_inc.max(r);
            }
        }
    }

    let variances_pass = max_ratio_err <= VAR_TOL;
    let correlations_pass = max_re_im <= CORR_TOL && max_cross <= CORR_TOL && max_inc <= CORR_TOL;
    let mirror_pass = max_mirror == 0.0;
    Ok(StatsReport {
        n,
        m,
        n_paths,
        t_grid: t_grid.to_vec(),
        seed,
        variance_tolerance: VAR_TOL,
        correlation_tolerance: CORR_TOL,
        variances,
        max_variance_ratio_error: max_ratio_err,
        max_re_im_correlation: max_re_im,
        max_cross_block_correlation: max_cross,
        max_increment_correlation: max_inc,
        max_mirror_deviation: max_mirror,
        variances_pass,
        correlations_pass,
        mirror_pass,
        pass: variances_pass && correlations_pass && mirror_pass,
    })
}
