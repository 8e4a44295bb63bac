//! Distances between sample sets, energy profiles and delocalization.
//!
//! Set-level distances work on flattened samples: raw values in the time
//! domain, chart coordinates of the spectrum in the frequency domain. The
//! chart is real, carries the same information as the complex spectrum and
//! preserves distances up to the fixed diagonal weighting of the chart.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::encode_series;
use crate::series::{Domain, TimeSeries};
use crate::spectral::dft;
use crate::stochastic::Rng;

const PROJECTION_STREAM: u64 = 0x736c;
const SPLIT_STREAM: u64 = 0x7370;

/// A nonempty list of equally shaped series with a provenance label.
#[derive(Debug, Clone)]
pub struct SampleSet {
    series: Vec<TimeSeries>,
    label: String,
}

impl SampleSet {
    pub fn new(series: Vec<TimeSeries>, label: impl Into<String>) -> Result<Self> {
        let Some(first) = series.first() else {
            return Err(Error::Value("sample set is empty".into()));
        };
        let shape = first.shape();
        if let Some(i) = series.iter().position(|s| s.shape() != shape) {
            return Err(Error::Shape(format!(
                "sample {i} has shape {:?}, expected {shape:?}",
                series[i].shape()
            )));
        }
        Ok(Self {
            series,
            label: label.into(),
        })
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn into_series(self) -> Vec<TimeSeries> {
        self.series
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// `(N, M)` shared by every sample.
    pub fn shape(&self) -> (usize, usize) {
        self.series[0].shape()
    }

    /// One flattened sample per row, in the coordinates of `domain`.
    pub fn flatten(&self, domain: Domain) -> Array2<f64> {
        encode_series(&self.series, domain).expect("homogeneous by construction")
    }

    /// Elementwise average sample.
    pub fn mean(&self) -> TimeSeries {
        let mut acc = Array2::<f64>::zeros(self.shape());
        for s in &self.series {
            acc += s.values();
        }
        TimeSeries::new(acc / self.len() as f64).expect("finite mean of finite series")
    }
}

fn sorted(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn check_order(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Value(format!("Wasserstein order p must be ≥ 1, got {p}")))
    }
}

/// `W_p` between two sorted samples.
fn wasserstein_sorted(a: &[f64], b: &[f64], p: f64) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let cost = |x: f64, y: f64| {
        let d = (x - y).abs();
        if p == 2.0 {
            d * d
        } else if p == 1.0 {
            d
        } else {
            d.powf(p)
        }
    };
    let total = if na == nb {
        a.iter().zip(b).map(|(&x, &y)| cost(x, y)).sum::<f64>() / na as f64
    } else {
        // Exact integral over u in [0, 1] of the piecewise-constant quantile
        // functions, walking the merged breakpoints i/na and j/nb.
        let (mut i, mut j) = (0usize, 0usize);
        let mut u = 0.0;
        let mut acc = 0.0;
        while i < na && j < nb {
            let next_a = (i + 1) as f64 / na as f64;
            let next_b = (j + 1) as f64 / nb as f64;
            let next = next_a.min(next_b);
            acc += (next - u) * cost(a[i], b[j]);
            u = next;
            // Cross-multiplied comparisons avoid rounding ties.
            let ca = (i + 1) * nb;
            let cb = (j + 1) * na;
            if ca <= cb {
                i += 1;
            }
            if cb <= ca {
                j += 1;
            }
        }
        acc
    };
    if p == 1.0 {
        total
    } else {
        total.powf(1.0 / p)
    }
}

/// `W_p` distance between two empirical distributions on the line.
pub fn wasserstein_1d(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Value("Wasserstein distance of an empty sample".into()));
    }
    check_order(p)?;
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "sample value",
            location: "wasserstein_1d input".into(),
        });
    }
    Ok(wasserstein_sorted(&sorted(a.iter().copied()), &sorted(b.iter().copied()), p))
}

/// Monte-Carlo sliced Wasserstein estimate with its per-slice values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicedReport {
    pub mean: f64,
    pub two_standard_errors: f64,
    pub n_projections: usize,
    pub seed: u64,
    #[serde(skip)]
    pub slices: Vec<f64>,
}

fn mean_and_two_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 2.0 * (var / n).sqrt())
}

/// Directions drawn as normalized standard Gaussian vectors, one per row.
pub fn random_directions(n_proj: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = Rng::new(seed, PROJECTION_STREAM);
    let mut dirs = Array2::zeros((n_proj, dim));
    for mut row in dirs.axis_iter_mut(Axis(0)) {
        loop {
            row.mapv_inplace(|_| rng.normal());
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row /= norm;
                break;
            }
        }
    }
    dirs
}

/// Sliced `W_p` between the rows of `a` and the rows of `b`.
pub fn sliced_wasserstein_flat(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    n_proj: usize,
    p: f64,
    seed: u64,
) -> Result<SlicedReport> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::Value("sliced Wasserstein of an empty set".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "samples of dimension {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if n_proj == 0 {
        return Err(Error::Value("n_projections ≥ 1 required".into()));
    }
    check_order(p)?;
    let dirs = random_directions(n_proj, a.ncols(), seed);
    let mut slices = Vec::with_capacity(n_proj);
    const CHUNK: usize = 256;
    for block in dirs.axis_chunks_iter(Axis(0), CHUNK) {
        let pa = a.dot(&block.t());
        let pb = b.dot(&block.t());
        for k in 0..block.nrows() {
            let sa = sorted(pa.column(k).iter().copied());
            let sb = sorted(pb.column(k).iter().copied());
            slices.push(wasserstein_sorted(&sa, &sb, p));
        }
    }
    let (mean, two_se) = mean_and_two_se(&slices);
    Ok(SlicedReport {
        mean,
        two_standard_errors: two_se,
        n_projections: n_proj,
        seed,
        slices,
    })
}

/// Sliced `W_2` between two sample sets in the coordinates of `domain`.
pub fn sliced_wasserstein(
    a: &SampleSet,
    b: &SampleSet,
    domain: Domain,
    n_proj: usize,
    seed: u64,
) -> Result<SlicedReport> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "sample sets of shape {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    sliced_wasserstein_flat(a.flatten(domain).view(), b.flatten(domain).view(), n_proj, 2.0, seed)
}

/// `W_2` along each coordinate axis.
pub fn marginal_wasserstein(a: &SampleSet, b: &SampleSet, domain: Domain) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "sample sets of shape {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let fa = a.flatten(domain);
    let fb = b.flatten(domain);
    Ok(fa
        .axis_iter(Axis(1))
        .zip(fb.axis_iter(Axis(1)))
        .map(|(ca, cb)| {
            wasserstein_sorted(&sorted(ca.iter().copied()), &sorted(cb.iter().copied()), 2.0)
        })
        .collect())
}

/// Energy per time step, or per frequency of the unitary spectrum.
pub fn density_profile(x: &TimeSeries, domain: Domain) -> Vec<f64> {
    match domain {
        Domain::Time => x
            .values()
            .axis_iter(Axis(0))
            .map(|row| row.dot(&row))
            .collect(),
        Domain::Frequency => dft(x)
            .values()
            .axis_iter(Axis(0))
            .map(|row| row.iter().map(|z| z.norm_sqr()).sum())
            .collect(),
    }
}

fn cyclic_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// Smallest energy-weighted mean cyclic distance to a reference index.
pub fn delocalization_of_profile(profile: &[f64]) -> Result<f64> {
    let n = profile.len();
    let total: f64 = profile.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Value("delocalization of a zero signal".into()));
    }
    let best = (0..n)
        .map(|r| {
            profile
                .iter()
                .enumerate()
                .map(|(k, e)| cyclic_distance(r, k, n) as f64 * e)
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best / total)
}

pub fn delocalization(x: &TimeSeries, domain: Domain) -> Result<f64> {
    delocalization_of_profile(&density_profile(x, domain))
}

/// Per-sample `(delta_time, delta_freq)`.
pub fn delocalization_pairs(set: &SampleSet) -> Result<Vec<(f64, f64)>> {
    set.series()
        .iter()
        .enumerate()
        .map(|(i, x)| {
            Ok((
                delocalization(x, Domain::Time).map_err(|e| e.context(format!("sample {i}")))?,
                delocalization(x, Domain::Frequency).map_err(|e| e.context(format!("sample {i}")))?,
            ))
        })
        .collect()
}

/// Mean with a normal-approximation 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
}

pub fn mean_ci95(values: &[f64]) -> MeanCi {
    let (mean, two_se) = mean_and_two_se(values);
    MeanCi {
        mean,
        ci95: 1.96 / 2.0 * two_se,
    }
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let v = sorted(values.iter().copied());
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Reference distances for judging generated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// Training set against copies of its average sample.
    pub mean_baseline: SlicedReport,
    /// One random half of the training set against the other.
    pub self_baseline: SlicedReport,
}

/// Mean and self baselines. An odd training set loses one random element
/// before being halved.
pub fn baselines(train: &SampleSet, domain: Domain, n_proj: usize, seed: u64) -> Result<Baselines> {
    if train.len() < 4 {
        return Err(Error::Value(format!(
            "baselines need at least 4 samples, got {}",
            train.len()
        )));
    }
    let flat = train.flatten(domain);
    let mean_row: Array1<f64> = flat.mean_axis(Axis(0)).expect("nonempty");
    let copies = Array2::from_shape_fn(flat.dim(), |(_, j)| mean_row[j]);
    let mean_baseline = sliced_wasserstein_flat(flat.view(), copies.view(), n_proj, 2.0, seed)?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    Rng::new(seed, SPLIT_STREAM).shuffle(&mut order);
    let half = train.len() / 2;
    let first = flat.select(Axis(0), &order[..half]);
    let second = flat.select(Axis(0), &order[half..2 * half]);
    let self_baseline = sliced_wasserstein_flat(first.view(), second.view(), n_proj, 2.0, seed)?;
    Ok(Baselines {
        mean_baseline,
        self_baseline,
    })
}

/// JSON record for one distance in one metric domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub domain: Domain,
    pub mean: f64,
    pub two_standard_errors: f64,
    pub n_projections: usize,
    pub seed: u64,
}

impl MetricReport {
    pub fn sliced(domain: Domain, report: &SlicedReport) -> Self {
        Self {
            metric: "sliced_wasserstein".into(),
            domain,
            mean: report.mean,
            two_standard_errors: report.two_standard_errors,
            n_projections: report.n_projections,
            seed: report.seed,
        }
    }
}

/// Dot product helper for callers holding plain slices.
pub fn project(sample: &[f64], direction: &[f64]) -> f64 {
    ArrayView1::from(sample).dot(&ArrayView1::from(direction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::Rng;
    use proptest::prelude::*;

    fn set(rows: &Array2<f64>, n: usize, m: usize) -> SampleSet {
        SampleSet::new(
            rows.axis_iter(Axis(0))
                .map(|r| TimeSeries::from_flat(n, m, r.to_vec()).unwrap())
                .collect(),
            "test",
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_examples() {
        assert_eq!(wasserstein_1d(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0], 2.0).unwrap(), 0.0);
        for p in [1.0, 2.0, 3.5] {
            assert!((wasserstein_1d(&[0.0], &[-2.5], p).unwrap() - 2.5).abs() < 1e-12);
        }
        let w = wasserstein_1d(&[0.0, 1.0], &[0.5, 1.5], 2.0).unwrap();
        assert!((w - 0.5).abs() < 1e-15);
        assert!(wasserstein_1d(&[], &[1.0], 2.0).is_err());
    }

    #[test]
    fn unequal_sizes_match_replicated_equal_sizes() {
        // Replicating each point k times leaves the empirical law unchanged.
        let a = [0.3, -1.0, 2.0];
        let b = [0.0, 1.0];
        let a6: Vec<f64> = a.iter().flat_map(|&v| [v, v]).collect();
        let b6: Vec<f64> = b.iter().flat_map(|&v| [v, v, v]).collect();
        for p in [1.0, 2.0] {
            let direct = wasserstein_1d(&a, &b, p).unwrap();
            let replicated = wasserstein_1d(&a6, &b6, p).unwrap();
            assert!((direct - replicated).abs() < 1e-12, "p={p}: {direct} vs {replicated}");
        }
    }

    proptest! {
        #[test]
        fn wasserstein_symmetry_and_scaling(
            a in prop::collection::vec(-10.0f64..10.0, 1..20),
            b in prop::collection::vec(-10.0f64..10.0, 1..20),
            c in -5.0f64..5.0,
        ) {
            let w = wasserstein_1d(&a, &b, 2.0).unwrap();
            prop_assert_eq!(w, wasserstein_1d(&b, &a, 2.0).unwrap());
            let ca: Vec<f64> = a.iter().map(|v| c * v).collect();
            let cb: Vec<f64> = b.iter().map(|v| c * v).collect();
            let wc = wasserstein_1d(&ca, &cb, 2.0).unwrap();
            prop_assert!((wc - c.abs() * w).abs() <= 1e-12 * (1.0 + w));
        }

        #[test]
        fn slice_triangle_inequality(
            a in prop::collection::vec(-5.0f64..5.0, 6),
            b in prop::collection::vec(-5.0f64..5.0, 6),
            c in prop::collection::vec(-5.0f64..5.0, 6),
        ) {
            let ab = wasserstein_1d(&a, &b, 2.0).unwrap();
            let bc = wasserstein_1d(&b, &c, 2.0).unwrap();
            let ac = wasserstein_1d(&a, &c, 2.0).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn delocalization_is_shift_and_scale_invariant(
            v in prop::collection::vec(-3.0f64..3.0, 2..24),
            shift in 0usize..24,
            scale in 0.1f64..10.0,
        ) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let n = v.len();
            let x = TimeSeries::from_column(&v).unwrap();
            let rolled: Vec<f64> = (0..n).map(|i| v[(i + n - shift % n) % n]).collect();
            let y = TimeSeries::from_column(&rolled).unwrap();
            let z = TimeSeries::from_column(&v.iter().map(|a| a * scale).collect::<Vec<_>>()).unwrap();
            for domain in Domain::BOTH {
                let d = delocalization(&x, domain).unwrap();
                prop_assert!((delocalization(&y, domain).unwrap() - d).abs() <= 1e-9 * (1.0 + d));
                prop_assert!((delocalization(&z, domain).unwrap() - d).abs() <= 1e-9 * (1.0 + d));
                prop_assert!(d >= 0.0 && d <= n as f64 / 2.0);
            }
        }
    }

    #[test]
    fn sliced_distance_of_identical_sets_is_zero() {
        let rows = Rng::new(0, 0).normal_matrix(50, 6);
        let a = set(&rows, 3, 2);
        for domain in Domain::BOTH {
            let r = sliced_wasserstein(&a, &a, domain, 200, 1).unwrap();
            assert!(r.slices.iter().all(|&v| v == 0.0));
        }
    }

    /// `E|<u, c>|` for `u` uniform on the unit sphere in `d` dimensions:
    /// `|c| Gamma(d/2) / (sqrt(pi) Gamma((d+1)/2))`, via the ratio recursion.
    fn sphere_mean_abs_projection(d: usize, norm: f64) -> f64 {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut ratio = if d % 2 == 1 { sqrt_pi } else { 2.0 / sqrt_pi };
        let mut k = if d % 2 == 1 { 1 } else { 2 };
        while k < d {
            ratio *= k as f64 / (k + 1) as f64;
            k += 2;
        }
        norm * ratio / sqrt_pi
    }

    #[test]
    fn sphere_oracle_low_dimensions() {
        // d = 1: |c|; d = 2: 2|c|/pi; d = 3: |c|/2.
        assert!((sphere_mean_abs_projection(1, 1.0) - 1.0).abs() < 1e-15);
        assert!((sphere_mean_abs_projection(2, 1.0) - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!((sphere_mean_abs_projection(3, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn translation_matches_sphere_average() {
        let mut rng = Rng::new(3, 0);
        let rows = rng.normal_matrix(40, 8);
        let c: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let shifted = Array2::from_shape_fn(rows.dim(), |(i, j)| rows[[i, j]] + c[j]);
        let r = sliced_wasserstein_flat(rows.view(), shifted.view(), 10_000, 2.0, 5).unwrap();
        let dirs = random_directions(10_000, 8, 5);
        for (k, &s) in r.slices.iter().enumerate() {
            let expect = project(&c, dirs.row(k).as_slice().unwrap()).abs();
            assert!((s - expect).abs() < 1e-9);
        }
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let oracle = sphere_mean_abs_projection(8, norm);
        assert!((r.mean / oracle - 1.0).abs() < 0.02, "{} vs {oracle}", r.mean);
    }

    #[test]
    fn single_projection_is_deterministic() {
        let mut rng = Rng::new(1, 0);
        let a = rng.normal_matrix(20, 4);
        let b = rng.normal_matrix(25, 4);
        let x = sliced_wasserstein_flat(a.view(), b.view(), 1, 2.0, 9).unwrap();
        let y = sliced_wasserstein_flat(a.view(), b.view(), 1, 2.0, 9).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.two_standard_errors, 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = set(&Array2::zeros((3, 4)), 4, 1);
        let b = set(&Array2::zeros((3, 4)), 2, 2);
        assert!(matches!(sliced_wasserstein(&a, &b, Domain::Time, 10, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn marginals_against_brute_force() {
        let mut rng = Rng::new(2, 0);
        let a = rng.normal_matrix(7, 4);
        let b = rng.normal_matrix(7, 4);
        let m = marginal_wasserstein(&set(&a, 4, 1), &set(&b, 4, 1), Domain::Time).unwrap();
        for j in 0..4 {
            let mut ca: Vec<f64> = a.column(j).to_vec();
            let mut cb: Vec<f64> = b.column(j).to_vec();
            ca.sort_by(|x, y| x.partial_cmp(y).unwrap());
            cb.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let brute = (ca.iter().zip(&cb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 7.0).sqrt();
            assert_eq!(m[j], brute);
        }
        let mut shifted = a.clone();
        shifted.column_mut(2).mapv_inplace(|v| v + 1.5);
        let m = marginal_wasserstein(&set(&a, 4, 1), &set(&shifted, 4, 1), Domain::Time).unwrap();
        for (j, v) in m.iter().enumerate() {
            let expect = if j == 2 { 1.5 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn profiles() {
        let c = TimeSeries::from_column(&[2.0; 8]).unwrap();
        assert_eq!(density_profile(&c, Domain::Time), vec![4.0; 8]);
        let f = density_profile(&c, Domain::Frequency);
        assert!((f[0] - 32.0).abs() < 1e-12 && f[1..].iter().all(|v| v.abs() < 1e-20));

        let n = 16;
        let harmonic: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / n as f64).cos())
            .collect();
        let x = TimeSeries::from_column(&harmonic).unwrap();
        let f = density_profile(&x, Domain::Frequency);
        for (k, v) in f.iter().enumerate() {
            if k == 1 || k == n - 1 {
                assert!((v - 4.0).abs() < 1e-12);
            } else {
                assert!(v.abs() < 1e-20);
            }
        }
        let mut rng = Rng::new(0, 0);
        let y = TimeSeries::new(rng.normal_matrix(13, 3)).unwrap();
        let st: f64 = density_profile(&y, Domain::Time).iter().sum();
        let sf: f64 = density_profile(&y, Domain::Frequency).iter().sum();
        assert!((st - sf).abs() <= 1e-10 * st);
    }

    #[test]
    fn delocalization_worked_values() {
        let spike = TimeSeries::from_column(&[0.0, 0.0, 3.0, 0.0, 0.0]).unwrap();
        assert_eq!(delocalization(&spike, Domain::Time).unwrap(), 0.0);
        let flat = TimeSeries::from_column(&[1.0; 4]).unwrap();
        assert_eq!(delocalization(&flat, Domain::Time).unwrap(), 1.0);
        assert!(delocalization(&flat, Domain::Frequency).unwrap() < 1e-30);
        // Uniform N = 8: distances 0,1,2,3,4,3,2,1 average to 2.
        let flat8 = TimeSeries::from_column(&[1.0; 8]).unwrap();
        assert_eq!(delocalization(&flat8, Domain::Time).unwrap(), 2.0);
        assert!(delocalization(&TimeSeries::zeros(4, 1), Domain::Time).is_err());
    }

    #[test]
    fn baselines_of_constant_set_vanish() {
        let rows = Array2::from_shape_fn((9, 4), |(_, j)| j as f64);
        let b = baselines(&set(&rows, 4, 1), Domain::Time, 50, 0).unwrap();
        assert!(b.mean_baseline.mean.abs() < 1e-12 && b.self_baseline.mean.abs() < 1e-12);
        assert!(baselines(&set(&Array2::zeros((3, 4)), 4, 1), Domain::Time, 10, 0).is_err());
    }

    #[test]
    fn gaussian_baselines() {
        let rows = Rng::new(4, 0).normal_matrix(10_000, 8);
        let b = baselines(&set(&rows, 8, 1), Domain::Time, 500, 1).unwrap();
        assert!((b.mean_baseline.mean - 1.0).abs() < 0.05, "{:?}", b.mean_baseline.mean);
        assert!(b.self_baseline.mean < 0.1 * b.mean_baseline.mean);
    }

    #[test]
    fn confidence_interval_and_median() {
        let ci = mean_ci95(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ci.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((ci.ci95 - 1.96 * sd / 2.0).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
