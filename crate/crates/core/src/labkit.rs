//! Synthetic datasets, spectral Gaussian smoothing and the smoothing-width
//! crossover experiment.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::config::ValidatedConfig;
use crate::datio::{prepare, Dataset};
use crate::diffusion::{reverse_sample, VpSchedule};
use crate::error::{Error, Result};
use crate::metrics::{delocalization, density_profile, median, sliced_wasserstein, SampleSet};
use crate::scoring::train;
use crate::series::{Domain, SpectralSeries, TimeSeries};
use crate::spectral::{dft, idft};
use crate::stochastic::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// Random-amplitude, random-phase harmonics `1..=harmonics` plus an
    /// offset and weak white noise.
    FreqLocalized { harmonics: usize, noise: f64 },
    /// Gaussian bumps of the given width at random positions plus weak noise.
    TimeLocalized { bumps: usize, width: f64, noise: f64 },
    GaussianIid,
}

impl SynthKind {
    pub fn freq_localized() -> Self {
        SynthKind::FreqLocalized {
            harmonics: 2,
            noise: 0.1,
        }
    }

    pub fn time_localized() -> Self {
        SynthKind::TimeLocalized {
            bumps: 1,
            width: 1.0,
            noise: 0.05,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SynthKind::FreqLocalized { .. } => "freq_localized",
            SynthKind::TimeLocalized { .. } => "time_localized",
            SynthKind::GaussianIid => "gaussian_iid",
        }
    }

    /// Kind with default parameters from its name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "freq_localized" => Ok(Self::freq_localized()),
            "time_localized" => Ok(Self::time_localized()),
            "gaussian_iid" => Ok(SynthKind::GaussianIid),
            other => Err(Error::Value(format!(
                "unknown dataset kind '{other}' (expected freq_localized, time_localized or gaussian_iid)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n_samples: usize,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

/// Share of total energy on frequencies `{0, 1, 2, N-2, N-1}`.
pub fn low_frequency_energy_fraction(set: &[TimeSeries]) -> f64 {
    let mut low = 0.0;
    let mut total = 0.0;
    for x in set {
        let p = density_profile(x, Domain::Frequency);
        let n = p.len();
        for (k, e) in p.iter().enumerate() {
            total += e;
            if k <= 2 || k + 2 >= n {
                low += e;
            }
        }
    }
    low / total
}

fn validate_spec(spec: &SynthSpec) -> Result<()> {
    if spec.n_samples == 0 || spec.n == 0 || spec.m == 0 {
        return Err(Error::Value(format!(
            "dataset needs positive sizes, got {} samples of {}x{}",
            spec.n_samples, spec.n, spec.m
        )));
    }
    match spec.kind {
        SynthKind::FreqLocalized { harmonics, noise } => {
            if harmonics == 0 || harmonics > spec.n / 2 {
                return Err(Error::Value(format!("harmonics must lie in 1..=N/2, got {harmonics}")));
            }
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::Value("noise level must be ≥ 0".into()));
            }
        }
        SynthKind::TimeLocalized { bumps, width, noise } => {
            if bumps == 0 || !(width > 0.0 && width.is_finite()) {
                return Err(Error::Value("bumps ≥ 1 and width > 0 required".into()));
            }
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::Value("noise level must be ≥ 0".into()));
            }
        }
        SynthKind::GaussianIid => {}
    }
    Ok(())
}

fn draw_one(kind: &SynthKind, n: usize, m: usize, rng: &mut Rng) -> Array2<f64> {
    let mut x = Array2::<f64>::zeros((n, m));
    match *kind {
        SynthKind::FreqLocalized { harmonics, noise } => {
            for j in 0..m {
                let offset = 0.5 * rng.normal();
                let waves: Vec<(f64, f64)> = (1..=harmonics)
                    .map(|h| (rng.normal() / h as f64, 2.0 * PI * rng.uniform()))
                    .collect();
                for t in 0..n {
                    let mut v = offset;
                    for (h, &(amp, phase)) in waves.iter().enumerate() {
                        v += amp * (2.0 * PI * (h + 1) as f64 * t as f64 / n as f64 + phase).cos();
                    }
                    x[[t, j]] = v + noise * rng.normal();
                }
            }
        }
        SynthKind::TimeLocalized { bumps, width, noise } => {
            for j in 0..m {
                let shapes: Vec<(f64, f64)> = (0..bumps)
                    .map(|_| {
                        let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                        (sign * (1.0 + 0.5 * rng.normal().abs()), n as f64 * rng.uniform())
                    })
                    .collect();
                for t in 0..n {
                    let mut v = 0.0;
                    for &(amp, centre) in &shapes {
                        let d = (t as f64 - centre).abs();
                        let d = d.min(n as f64 - d);
                        v += amp * (-0.5 * (d / width).powi(2)).exp();
                    }
                    x[[t, j]] = v + noise * rng.normal();
                }
            }
        }
        SynthKind::GaussianIid => x.mapv_inplace(|_| rng.normal()),
    }
    x
}

/// Generates a dataset and checks its localization invariant: at least 80%
/// of the spectral energy on the lowest frequencies for `freq_localized`,
/// mean time delocalization at most `0.1 N` for `time_localized`.
pub fn synth_generate(spec: &SynthSpec) -> Result<SampleSet> {
    validate_spec(spec)?;
    let rng = Rng::new(spec.seed, 0);
    let series = (0..spec.n_samples)
        .map(|i| TimeSeries::new(draw_one(&spec.kind, spec.n, spec.m, &mut rng.substream(i as u64))))
        .collect::<Result<Vec<_>>>()?;
    match spec.kind {
        SynthKind::FreqLocalized { .. } => {
            let fraction = low_frequency_energy_fraction(&series);
            if fraction < 0.8 {
                return Err(Error::Data(format!(
                    "freq_localized draw has only {:.1}% low-frequency energy",
                    100.0 * fraction
                )));
            }
        }
        SynthKind::TimeLocalized { .. } => {
            let mean = series
                .iter()
                .map(|x| delocalization(x, Domain::Time))
                .sum::<Result<f64>>()?
                / series.len() as f64;
            if mean > 0.1 * spec.n as f64 {
                return Err(Error::Data(format!(
                    "time_localized draw has mean time delocalization {mean:.3} > {:.3}",
                    0.1 * spec.n as f64
                )));
            }
        }
        SynthKind::GaussianIid => {}
    }
    SampleSet::new(series, spec.kind.name())
}

/// Normalizing constant of the smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelNorm {
    /// `Z = sum_{k=1}^{N} exp(-k^2 / (2 sigma^2))`, which need not make the
    /// kernel sum to one.
    #[default]
    Literal,
    /// `Z` equal to the sum of the unnormalized kernel.
    SumToOne,
}

impl std::str::FromStr for KernelNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(KernelNorm::Literal),
            "sum_to_one" => Ok(KernelNorm::SumToOne),
            other => Err(Error::Value(format!(
                "unknown kernel normalization '{other}' (expected literal or sum_to_one)"
            ))),
        }
    }
}

/// Smoothing kernel on `k in 0..N`: `exp(-d(k, 0)^2 / (2 sigma^2)) / Z` with
/// the cyclic distance `d`, so that the kernel is even on the frequency
/// circle and smoothing keeps spectra mirror-symmetric.
pub fn smoothing_kernel(n: usize, sigma: f64, norm: KernelNorm) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Value(format!("kernel width must be > 0, got {sigma}")));
    }
    let gauss = |d: f64| (-d * d / (2.0 * sigma * sigma)).exp();
    let raw: Vec<f64> = (0..n)
        .map(|k| gauss(k.min(n - k) as f64))
        .collect();
    let z = match norm {
        KernelNorm::Literal => (1..=n).map(|k| gauss(k as f64)).sum::<f64>(),
        KernelNorm::SumToOne => raw.iter().sum(),
    };
    if !(z > 0.0) {
        return Err(Error::Value(format!(
            "kernel normalization underflows for sigma = {sigma}"
        )));
    }
    Ok(raw.into_iter().map(|g| g / z).collect())
}

/// Sum of the normalized kernel, recorded alongside experiment outputs.
pub fn kernel_sum(n: usize, sigma: f64, norm: KernelNorm) -> Result<f64> {
    if sigma == 0.0 {
        return Ok(1.0);
    }
    Ok(smoothing_kernel(n, sigma, norm)?.iter().sum())
}

/// Circular convolution of the spectrum with the Gaussian kernel of width
/// `sigma`, mapped back to the time domain. `sigma = 0` returns the input.
pub fn spectral_smooth(x: &TimeSeries, sigma: f64, norm: KernelNorm) -> Result<TimeSeries> {
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let (n, m) = x.shape();
    let kernel = smoothing_kernel(n, sigma, norm)?;
    let spec = dft(x);
    let s = spec.values();
    let out = Array2::from_shape_fn((n, m), |(k, j)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for q in 0..n {
            acc += kernel[(k + n - q) % n] * s[[q, j]];
        }
        acc
    });
    // The kernel is even, so the result is mirror-symmetric up to rounding;
    // the inverse transform enforces the residue bound.
    idft(&SpectralSeries::from_raw(out)?)
}

/// One line of the crossover table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub sigma: f64,
    pub diffusion_domain: Domain,
    pub metric_domain: Domain,
    pub sw_mean: f64,
    pub sw_2se: f64,
    pub delta_time_median: f64,
    pub delta_freq_median: f64,
    pub seed: u64,
}

pub const CROSSOVER_HEADER: [&str; 8] = [
    "sigma",
    "diffusion_domain",
    "metric_domain",
    "sw_mean",
    "sw_2se",
    "delta_time_median",
    "delta_freq_median",
    "seed",
];

/// Per-sigma bookkeeping written to the metadata sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaInfo {
    pub sigma: f64,
    pub kernel_sum: f64,
    pub n_train: usize,
    pub n_val: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverMetadata {
    pub config_hash: String,
    pub base_label: String,
    pub base_size: usize,
    pub seed: u64,
    pub kernel_norm: KernelNorm,
    pub sigmas: Vec<SigmaInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverTable {
    pub rows: Vec<CrossoverRow>,
    pub metadata: CrossoverMetadata,
}

impl CrossoverTable {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(CROSSOVER_HEADER)?;
        for r in &self.rows {
            writer.write_record([
                r.sigma.to_string(),
                r.diffusion_domain.to_string(),
                r.metric_domain.to_string(),
                r.sw_mean.to_string(),
                r.sw_2se.to_string(),
                r.delta_time_median.to_string(),
                r.delta_freq_median.to_string(),
                r.seed.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save(&self, csv_path: impl AsRef<Path>) -> Result<PathBuf> {
        let csv_path = csv_path.as_ref();
        let file = std::fs::File::create(csv_path)
            .map_err(|e| Error::Io(e).context(format!("writing {}", csv_path.display())))?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let meta_path = csv_path.with_extension("meta.json");
        std::fs::write(&meta_path, serde_json::to_string_pretty(&self.metadata)?)?;
        Ok(meta_path)
    }

    pub fn rows_for(&self, sigma: f64, diffusion: Domain, metric: Domain) -> Option<&CrossoverRow> {
        self.rows
            .iter()
            .find(|r| r.sigma == sigma && r.diffusion_domain == diffusion && r.metric_domain == metric)
    }
}

/// Cached result of one `(sigma, diffusion domain)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellRecord {
    key: String,
    sw: Vec<(Domain, f64, f64)>,
}

/// Smoothed and re-standardized copy of the base set with its split.
pub struct SmoothedData {
    pub train: Vec<TimeSeries>,
    pub val: Vec<TimeSeries>,
    pub kernel_sum: f64,
}

pub fn smoothed_dataset(
    base: &SampleSet,
    sigma: f64,
    norm: KernelNorm,
    val_fraction: f64,
    split_seed: u64,
) -> Result<SmoothedData> {
    let smoothed = base
        .series()
        .iter()
        .map(|x| spectral_smooth(x, sigma, norm))
        .collect::<Result<Vec<_>>>()?;
    let ds = Dataset::new(base.label(), smoothed)?;
    let (train, val, _) = prepare(&ds, val_fraction, split_seed)?;
    Ok(SmoothedData {
        train: train.series,
        val: val.series,
        kernel_sum: kernel_sum(base.shape().0, sigma, norm)?,
    })
}

fn cell_key(cfg_hash: &str, base: &SampleSet, sigma: f64, domain: Domain, seed: u64, norm: KernelNorm) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(cfg_hash.as_bytes());
    h.update(base.label().as_bytes());
    for x in base.series() {
        for v in x.values() {
            h.update(v.to_le_bytes());
        }
    }
    h.update(sigma.to_le_bytes());
    h.update(domain.as_str().as_bytes());
    h.update(seed.to_le_bytes());
    h.update(format!("{norm:?}").as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// For each kernel width: smooth and standardize the base set, train one
/// model per diffusion domain, generate as many samples as the training
/// split holds and measure the sliced Wasserstein distance to the training
/// split in both metric domains. Rows come in `(sigma, diffusion, metric)`
/// order.
///
/// With `cache_dir`, finished cells are stored there and reused by later
/// calls with the same inputs.
pub fn crossover_run(
    base: &SampleSet,
    sigmas: &[f64],
    cfg: &ValidatedConfig,
    norm: KernelNorm,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<CrossoverTable> {
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::Value(format!("kernel widths must be ≥ 0, got {s}")));
    }
    if base.shape() != (cfg.data.n, cfg.data.m) {
        return Err(Error::Shape(format!(
            "base series are {:?} but the config expects {}x{}",
            base.shape(),
            cfg.data.n,
            cfg.data.m
        )));
    }
    let mut run_cfg = cfg.get().clone();
    run_cfg.seed = seed;
    let run_cfg = crate::config::validate_config(run_cfg)?;
    let cfg_hash = run_cfg.hash();
    let sched = VpSchedule::from_config(&run_cfg)?;
    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut rows = Vec::new();
    let mut infos = Vec::new();
    for &sigma in sigmas {
        let data = smoothed_dataset(base, sigma, norm, run_cfg.data.val_fraction, cfg.seed)?;
        let train_set = SampleSet::new(data.train.clone(), "train")?;
        let dt: Vec<f64> = data
            .train
            .iter()
            .map(|x| delocalization(x, Domain::Time))
            .collect::<Result<_>>()?;
        let df: Vec<f64> = data
            .train
            .iter()
            .map(|x| delocalization(x, Domain::Frequency))
            .collect::<Result<_>>()?;
        let (dt_med, df_med) = (median(&dt), median(&df));
        for domain in Domain::BOTH {
            let key = cell_key(&cfg_hash, base, sigma, domain, seed, norm);
            let cache_path = cache_dir.map(|d| d.join(format!("cell-{}.json", &key[..16])));
            let cached = cache_path
                .as_ref()
                .and_then(|p| std::fs::read_to_string(p).ok())
                .and_then(|text| serde_json::from_str::<CellRecord>(&text).ok())
                .filter(|r| r.key == key);
            let record = match cached {
                Some(r) => r,
                None => {
                    let context = format!("crossover cell sigma = {sigma}, {domain} domain");
                    let (model, _) = train(&data.train, &data.val, domain, &run_cfg)
                        .map_err(|e| e.context(context.clone()))?;
                    let gen_rng = Rng::new(seed, 0x6765_6e00 + domain as u64);
                    let generated = reverse_sample(&model, &sched, data.train.len(), run_cfg.diffusion.steps, &gen_rng)
                        .map_err(|e| e.context(context.clone()))?;
                    let gen_set = SampleSet::new(generated, format!("generated-{domain}"))?;
                    let sw = Domain::BOTH
                        .iter()
                        .map(|&metric| {
                            let r = sliced_wasserstein(&train_set, &gen_set, metric, run_cfg.metrics.n_projections, seed)?;
                            Ok((metric, r.mean, r.two_standard_errors))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let record = CellRecord { key: key.clone(), sw };
                    if let Some(p) = &cache_path {
                        std::fs::write(p, serde_json::to_string(&record)?)?;
                    }
                    record
                }
            };
            for (metric, mean, two_se) in record.sw {
                rows.push(CrossoverRow {
                    sigma,
                    diffusion_domain: domain,
                    metric_domain: metric,
                    sw_mean: mean,
                    sw_2se: two_se,
                    delta_time_median: dt_med,
                    delta_freq_median: df_med,
                    seed,
                });
            }
        }
        infos.push(SigmaInfo {
            sigma,
            kernel_sum: data.kernel_sum,
            n_train: data.train.len(),
            n_val: data.val.len(),
        });
    }
    Ok(CrossoverTable {
        rows,
        metadata: CrossoverMetadata {
            config_hash: cfg_hash,
            base_label: base.label().to_string(),
            base_size: base.len(),
            seed,
            kernel_norm: norm,
            sigmas: infos,
        },
    })
}
