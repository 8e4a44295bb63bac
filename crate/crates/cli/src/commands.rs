use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use freqdiff::config::{validate_config, RunConfig, ValidatedConfig};
use freqdiff::datio::{load_csv, prepare, save_csv, Dataset, Standardization};
use freqdiff::diffusion::{
    forward_commutation_check, reverse_sample_freq_with_chart, reverse_sample_time, VpSchedule,
};
use freqdiff::labkit::{
    crossover_run, kernel_sum, low_frequency_energy_fraction, spectral_smooth, synth_generate,
    SynthKind, SynthSpec,
};
use freqdiff::metrics::{
    baselines, delocalization, delocalization_pairs, marginal_wasserstein, mean_ci95, median,
    sliced_wasserstein, MetricReport, SampleSet,
};
use freqdiff::scoring::{load_checkpoint, save_checkpoint};
use freqdiff::spectral::{dft, from_phi, idft, to_phi, unitarity_check};
use freqdiff::stochastic::mirrored_stats_check;
use freqdiff::{Domain, Rng, TimeSeries};

use crate::metadata::{sidecar, Recorder};
use crate::{
    AnalyzeArgs, CliError, Common, CrossoverArgs, EvaluateArgs, InterveneArgs, MetricKind,
    SampleArgs, Suite, SynthArgs, TrainArgs, VerifyArgs,
};

type CmdResult = Result<(), CliError>;

const SAMPLE_STREAM: u64 = 0x7361;
const VERIFY_STREAM: u64 = 0x7665;

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| freqdiff::Error::Io(e).context(format!("writing {}", path.display())))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| freqdiff::Error::Io(e).context(format!("reading {}", path.display())))?;
    Ok(serde_json::from_str(&text)
        .map_err(|e| freqdiff::Error::Json(e).context(path.display().to_string()))?)
}

fn ensure_parent(path: &Path) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Configuration from `--config` (or `fallback` when that file exists),
/// with the command-line overrides applied. The seed override is optional
/// because some commands give `--seed` a different role.
fn load_config(common: &Common, fallback: Option<&Path>, apply_seed: bool) -> Result<RunConfig, CliError> {
    let mut cfg = match (&common.config, fallback) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(path)) if path.exists() => RunConfig::load(path)?,
        _ => RunConfig::default(),
    };
    if apply_seed {
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
    }
    if let Some(steps) = common.steps {
        cfg.diffusion.steps = steps;
    }
    if let Some(k) = common.n_projections {
        cfg.metrics.n_projections = k;
    }
    Ok(cfg)
}

/// Validates `cfg` after adopting the series shape of `ds`.
fn config_for_data(mut cfg: RunConfig, ds: &Dataset) -> Result<ValidatedConfig, CliError> {
    let (n, m) = ds
        .shape()
        .ok_or_else(|| freqdiff::Error::Data(format!("dataset '{}' is empty", ds.name)))?;
    cfg.data.n = n;
    cfg.data.m = m;
    Ok(validate_config(cfg)?)
}

fn sample_set(ds: Dataset) -> Result<SampleSet, CliError> {
    Ok(SampleSet::new(ds.series, ds.name)?)
}

pub fn synth(common: &Common, args: &SynthArgs) -> CmdResult {
    let mut rec = Recorder::start("synth", common);
    let cfg = validate_config(load_config(common, None, true)?)?;
    let spec = SynthSpec {
        kind: SynthKind::from_name(&args.kind)?,
        n_samples: args.n_samples,
        n: cfg.data.n,
        m: cfg.data.m,
        seed: cfg.seed,
    };
    let set = synth_generate(&spec)?;
    ensure_parent(&args.out)?;
    save_csv(&args.out, set.series(), Some(spec.kind.name()))?;
    rec.config_hash = cfg.hash();
    rec.seed("seed", cfg.seed);
    rec.output(&args.out);
    rec.details = json!({
        "spec": spec,
        "low_frequency_energy_fraction": low_frequency_energy_fraction(set.series()),
    });
    rec.finish(&sidecar(&args.out))
}

pub fn train(common: &Common, args: &TrainArgs) -> CmdResult {
    let mut rec = Recorder::start("train", common);
    let ds = load_csv(&args.data)?;
    let mut cfg = load_config(common, None, true)?;
    if let Some(domain) = args.domain {
        cfg.domain = domain;
    }
    let cfg = config_for_data(cfg, &ds)?;
    let (train_ds, val_ds, stats) = prepare(&ds, cfg.data.val_fraction, cfg.seed)?;
    cfg.check_dataset_size(train_ds.len())?;
    let (model, report) = freqdiff::scoring::train(&train_ds.series, &val_ds.series, cfg.domain, &cfg)
        .map_err(|e| e.context(format!("training the {} model", cfg.domain)))?;

    std::fs::create_dir_all(&args.out)?;
    let hash = cfg.hash();
    let ckpt = args.out.join("model.ckpt");
    save_checkpoint(&ckpt, &model, &hash)?;
    let report_path = args.out.join("train_report.json");
    write_json(&report_path, &report)?;
    let stats_path = args.out.join("standardization.json");
    write_json(&stats_path, &stats)?;
    let cfg_path = args.out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml_string())?;

    rec.config_hash = hash;
    rec.seed("seed", cfg.seed);
    rec.input("data", &args.data);
    for p in [&ckpt, &report_path, &stats_path, &cfg_path] {
        rec.output(p);
    }
    rec.details = json!({
        "domain": cfg.domain,
        "n_train": train_ds.len(),
        "n_val": val_ds.len(),
        "n_params": model.n_params(),
        "selected_epoch": report.selected_epoch,
        "best_val_loss": report.best_val_loss,
    });
    rec.finish(&args.out.join("metadata.json"))
}

pub fn sample(common: &Common, args: &SampleArgs) -> CmdResult {
    let mut rec = Recorder::start("sample", common);
    if args.n_samples == 0 {
        return Err(CliError::Usage("--n-samples must be at least 1".into()));
    }
    let (model, header) = load_checkpoint(&args.model)?;
    let dir = args.model.parent().unwrap_or(Path::new("."));
    let mut cfg = load_config(common, Some(&dir.join("config.toml")), true)?;
    let arch = model.architecture();
    cfg.data.n = arch.n;
    cfg.data.m = arch.m;
    cfg.domain = header.domain;
    let cfg = validate_config(cfg)?;
    let sched: VpSchedule = *model.schedule();
    let rng = Rng::new(cfg.seed, SAMPLE_STREAM);
    let steps = cfg.diffusion.steps;
    let (series, chart) = match header.domain {
        Domain::Time => (reverse_sample_time(&model, &sched, args.n_samples, steps, &rng)?, None),
        Domain::Frequency => {
            let out = reverse_sample_freq_with_chart(&model, &sched, args.n_samples, steps, &rng)?;
            (out.series, Some(out.chart))
        }
    };
    let stats_path = dir.join("standardization.json");
    let rescaled = !args.raw && stats_path.exists();
    let series = if rescaled {
        let stats: Standardization = read_json(&stats_path)?;
        stats.inverse(&series)?
    } else {
        series
    };

    ensure_parent(&args.out)?;
    let provenance = format!("{} model {}, seed {}", header.domain, args.model.display(), cfg.seed);
    save_csv(&args.out, &series, Some(&provenance))?;
    rec.output(&args.out);
    if let Some(chart) = chart {
        let as_series = chart
            .into_iter()
            .map(|pv| TimeSeries::new(pv.into_inner()))
            .collect::<freqdiff::Result<Vec<_>>>()?;
        let phi_path = args.out.with_extension("phi.csv");
        save_csv(&phi_path, &as_series, Some("chart coordinates at the end of the reverse process"))?;
        rec.output(&phi_path);
    }
    rec.config_hash = header.config_hash.clone();
    rec.seed("seed", cfg.seed);
    rec.input("model", &args.model);
    rec.details = json!({
        "domain": header.domain,
        "n_samples": args.n_samples,
        "steps": steps,
        "data_units": rescaled,
    });
    rec.finish(&sidecar(&args.out))
}

#[derive(Debug, Serialize)]
struct Summary {
    mean: f64,
    two_standard_errors: f64,
}

#[derive(Debug, Serialize)]
struct SlicedEntry {
    #[serde(flatten)]
    report: MetricReport,
    mean_baseline: Option<Summary>,
    self_baseline: Option<Summary>,
}

#[derive(Debug, Serialize)]
struct MarginalEntry {
    metric: &'static str,
    domain: Domain,
    mean: f64,
    per_coordinate: Vec<f64>,
}

pub fn evaluate(common: &Common, args: &EvaluateArgs) -> CmdResult {
    let mut rec = Recorder::start("evaluate", common);
    let train_ds = load_csv(&args.train)?;
    let cfg = config_for_data(load_config(common, None, true)?, &train_ds)?;
    let reference = sample_set(train_ds)?;
    let samples = sample_set(load_csv(&args.samples)?)?;
    if reference.shape() != samples.shape() {
        return Err(freqdiff::Error::Shape(format!(
            "reference series are {:?} but samples are {:?}",
            reference.shape(),
            samples.shape()
        ))
        .into());
    }
    let k = cfg.metrics.n_projections;
    let seed = cfg.seed;
    let results = match args.metric {
        MetricKind::Sliced => {
            let mut entries = Vec::new();
            for domain in args.domain.domains() {
                let sw = sliced_wasserstein(&reference, &samples, domain, k, seed)?;
                let base = if reference.len() >= 4 {
                    Some(baselines(&reference, domain, k, seed)?)
                } else {
                    None
                };
                let summary = |r: &freqdiff::metrics::SlicedReport| Summary {
                    mean: r.mean,
                    two_standard_errors: r.two_standard_errors,
                };
                entries.push(SlicedEntry {
                    report: MetricReport::sliced(domain, &sw),
                    mean_baseline: base.as_ref().map(|b| summary(&b.mean_baseline)),
                    self_baseline: base.as_ref().map(|b| summary(&b.self_baseline)),
                });
            }
            serde_json::to_value(entries)?
        }
        MetricKind::Marginal => {
            let mut entries = Vec::new();
            for domain in args.domain.domains() {
                let w = marginal_wasserstein(&reference, &samples, domain)?;
                entries.push(MarginalEntry {
                    metric: "marginal_wasserstein",
                    domain,
                    mean: w.iter().sum::<f64>() / w.len() as f64,
                    per_coordinate: w,
                });
            }
            serde_json::to_value(entries)?
        }
    };
    let output = json!({
        "reference": args.train.display().to_string(),
        "samples": args.samples.display().to_string(),
        "n_reference": reference.len(),
        "n_samples": samples.len(),
        "results": results,
    });
    ensure_parent(&args.out)?;
    write_json(&args.out, &output)?;
    rec.config_hash = cfg.hash();
    rec.seed("projection_seed", seed);
    rec.input("reference", &args.train);
    rec.input("samples", &args.samples);
    rec.output(&args.out);
    rec.finish(&sidecar(&args.out))
}

pub fn analyze(common: &Common, args: &AnalyzeArgs) -> CmdResult {
    let mut rec = Recorder::start("analyze", common);
    let ds = load_csv(&args.data)?;
    let cfg = config_for_data(load_config(common, None, true)?, &ds)?;
    let set = sample_set(ds)?;
    let pairs = delocalization_pairs(&set)?;
    std::fs::create_dir_all(&args.out)?;

    let pairs_path = args.out.join("delocalization.csv");
    let mut w = csv::Writer::from_path(&pairs_path)?;
    w.write_record(["sample_id", "delta_time", "delta_freq"])?;
    for (i, (dt, df)) in pairs.iter().enumerate() {
        w.write_record([i.to_string(), dt.to_string(), df.to_string()])?;
    }
    w.flush()?;

    let times: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let freqs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let summary_path = args.out.join("summary.json");
    write_json(
        &summary_path,
        &json!({
            "n_samples": set.len(),
            "series_length": set.shape().0,
            "delta_time": mean_ci95(&times),
            "delta_freq": mean_ci95(&freqs),
            "median_delta_time": median(&times),
            "median_delta_freq": median(&freqs),
        }),
    )?;
    rec.config_hash = cfg.hash();
    rec.input("data", &args.data);
    rec.output(&pairs_path);
    rec.output(&summary_path);
    rec.finish(&args.out.join("metadata.json"))
}

fn sigma_file_name(sigma: f64) -> String {
    format!("sigma_{sigma}.csv")
}

pub fn intervene(common: &Common, args: &InterveneArgs) -> CmdResult {
    let mut rec = Recorder::start("intervene", common);
    let ds = load_csv(&args.data)?;
    let cfg = config_for_data(load_config(common, None, true)?, &ds)?;
    let n = cfg.data.n;
    std::fs::create_dir_all(&args.out)?;
    let mut details = Vec::new();
    for &sigma in &args.sigma_list {
        let smoothed = ds
            .series
            .iter()
            .map(|x| spectral_smooth(x, sigma, args.kernel_norm))
            .collect::<freqdiff::Result<Vec<_>>>()
            .map_err(|e| e.context(format!("smoothing with sigma = {sigma}")))?;
        let path = args.out.join(sigma_file_name(sigma));
        save_csv(&path, &smoothed, Some(&format!("smoothed sigma={sigma}")))?;
        let dt = smoothed
            .iter()
            .map(|x| delocalization(x, Domain::Time))
            .collect::<freqdiff::Result<Vec<_>>>()?;
        let df = smoothed
            .iter()
            .map(|x| delocalization(x, Domain::Frequency))
            .collect::<freqdiff::Result<Vec<_>>>()?;
        details.push(json!({
            "sigma": sigma,
            "kernel_sum": kernel_sum(n, sigma, args.kernel_norm)?,
            "median_delta_time": median(&dt),
            "median_delta_freq": median(&df),
            "file": path.display().to_string(),
        }));
        rec.output(&path);
    }
    rec.config_hash = cfg.hash();
    rec.input("data", &args.data);
    rec.details = json!({ "kernel_norm": args.kernel_norm, "sigmas": details });
    rec.finish(&args.out.join("metadata.json"))
}

pub fn crossover(common: &Common, args: &CrossoverArgs) -> CmdResult {
    let mut rec = Recorder::start("crossover", common);
    let ds = load_csv(&args.data)?;
    // `--seed` selects the run; the configured seed keeps fixing the split.
    let cfg = config_for_data(load_config(common, None, false)?, &ds)?;
    let run_seed = common.seed.unwrap_or(cfg.seed);
    let base = sample_set(ds)?;
    let cache: PathBuf = args
        .cache
        .clone()
        .unwrap_or_else(|| args.out.with_extension("cells"));
    let table = crossover_run(&base, &args.sigma_list, &cfg, args.kernel_norm, run_seed, Some(&cache))?;
    ensure_parent(&args.out)?;
    let file = std::fs::File::create(&args.out)
        .map_err(|e| freqdiff::Error::Io(e).context(format!("writing {}", args.out.display())))?;
    table.write_csv(std::io::BufWriter::new(file))?;
    rec.config_hash = table.metadata.config_hash.clone();
    rec.seed("split_seed", cfg.seed);
    rec.seed("run_seed", run_seed);
    rec.input("data", &args.data);
    rec.input("cache", &cache);
    rec.output(&args.out);
    rec.details = serde_json::to_value(&table.metadata)?;
    rec.finish(&sidecar(&args.out))
}

#[derive(Debug, Serialize)]
struct DftSize {
    n: usize,
    unitarity: f64,
    round_trip: f64,
    parseval: f64,
    chart_round_trip: f64,
}

fn dft_suite(seed: u64) -> Result<(serde_json::Value, bool), CliError> {
    let mut rng = Rng::new(seed, VERIFY_STREAM);
    let mut sizes = Vec::new();
    for n in [1usize, 2, 3, 4, 5, 8, 16, 31, 32, 64, 127, 128, 256, 512] {
        let x = TimeSeries::new(rng.normal_matrix(n, 2))?;
        let spec = dft(&x);
        let back = idft(&spec)?;
        let round_trip = (back.values() - x.values()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let parseval = (spec.energy() - x.energy()).abs() / x.energy();
        let chart = from_phi(&to_phi(&x))?;
        let chart_round_trip = (chart.values() - x.values()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        sizes.push(DftSize {
            n,
            unitarity: unitarity_check(n),
            round_trip,
            parseval,
            chart_round_trip,
        });
    }
    let pass = sizes
        .iter()
        .all(|s| s.unitarity <= 1e-12 && s.round_trip <= 1e-10 && s.parseval <= 1e-10 && s.chart_round_trip <= 1e-10);
    Ok((json!({ "seed": seed, "sizes": sizes, "pass": pass }), pass))
}

fn commutation_suite(cfg: &RunConfig) -> Result<(serde_json::Value, bool), CliError> {
    let sched = VpSchedule::from_config(cfg)?;
    let mut rng = Rng::new(cfg.seed, VERIFY_STREAM);
    let mut cases = Vec::new();
    let mut pass = true;
    for (n, m) in [(16usize, 2usize), (33, 1)] {
        let x0 = TimeSeries::new(rng.normal_matrix(n, m))?;
        let deviation = forward_commutation_check(&sched, &x0, cfg.diffusion.steps, cfg.seed)?;
        pass &= deviation <= 1e-8;
        cases.push(json!({ "n": n, "m": m, "max_deviation": deviation }));
    }
    Ok((
        json!({ "seed": cfg.seed, "steps": cfg.diffusion.steps, "cases": cases, "pass": pass }),
        pass,
    ))
}

pub fn verify(common: &Common, args: &VerifyArgs) -> CmdResult {
    let mut rec = Recorder::start("verify", common);
    let cfg = validate_config(load_config(common, None, true)?)?;
    let (report, pass, name) = match args.suite {
        Suite::MirroredBm => {
            let report = mirrored_stats_check(args.n, args.m, args.paths, &[0.25, 0.5, 1.0], cfg.seed)?;
            let pass = report.pass;
            (serde_json::to_value(report)?, pass, "mirrored-bm")
        }
        Suite::Dft => {
            let (report, pass) = dft_suite(cfg.seed)?;
            (report, pass, "dft")
        }
        Suite::Commutation => {
            let (report, pass) = commutation_suite(&cfg)?;
            (report, pass, "commutation")
        }
    };
    ensure_parent(&args.out)?;
    write_json(&args.out, &report)?;
    rec.config_hash = cfg.hash();
    rec.seed("seed", cfg.seed);
    rec.output(&args.out);
    rec.details = json!({ "suite": name, "pass": pass });
    rec.finish(&sidecar(&args.out))?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "{name} checks failed, see {}",
            args.out.display()
        )))
    }
}
