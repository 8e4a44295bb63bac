use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"
seed = 3

[data]
n = 8

[diffusion]
steps = 100

[training]
epochs = 3
warmup_epochs = 1
batch_size = 16

[model]
hidden_sizes = [16]
time_features = 4
embed_dim = 4

[metrics]
n_projections = 50
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqdiff"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(text.trim_end().lines().count(), 1, "one line expected: {text}");
    text.trim_end().to_string()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), TINY).unwrap();
    dir
}

fn pipeline(dir: &Path, domain: &str) {
    ok(dir, &["synth", "--config", "c.toml", "--n-samples", "120", "--out", "d.csv"]);
    ok(dir, &["train", "--config", "c.toml", "--domain", domain, "--data", "d.csv", "--out", "m"]);
    ok(dir, &["sample", "--config", "c.toml", "--model", "m/model.ckpt", "--n-samples", "30", "--out", "s.csv"]);
}

#[test]
fn frequency_pipeline_writes_every_artifact() {
    let dir = workspace();
    let d = dir.path();
    pipeline(d, "frequency");
    for f in [
        "d.csv",
        "d.meta.json",
        "m/model.ckpt",
        "m/train_report.json",
        "m/standardization.json",
        "m/config.toml",
        "m/metadata.json",
        "s.csv",
        "s.phi.csv",
        "s.meta.json",
    ] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    let report = json(&d.join("m/train_report.json"));
    assert_eq!(report["domain"], "frequency");
    assert_eq!(report["epochs"].as_array().unwrap().len(), 3);

    let meta = json(&d.join("m/metadata.json"));
    assert_eq!(meta["command"], "train");
    assert_eq!(meta["seeds"]["seed"], 3);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    assert!(meta["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(meta["versions"]["freqdiff"].is_string());

    let samples = std::fs::read_to_string(d.join("s.csv")).unwrap();
    assert!(samples.starts_with("sample_id,time_index,f0,provenance\n"));
    assert_eq!(samples.lines().count(), 1 + 30 * 8);

    ok(d, &[
        "evaluate", "--config", "c.toml", "--train", "d.csv", "--samples", "s.csv", "--metric", "sliced",
        "--domain", "both", "--out", "e.json",
    ]);
    let eval = json(&d.join("e.json"));
    let results = eval["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["domain"], "time");
    assert_eq!(results[1]["domain"], "frequency");
    for r in results {
        assert!(r["mean"].as_f64().unwrap() >= 0.0);
        assert!(r["two_standard_errors"].as_f64().unwrap() >= 0.0);
        assert_eq!(r["n_projections"], 50);
        assert!(r["self_baseline"]["mean"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn time_models_write_no_chart_file() {
    let dir = workspace();
    pipeline(dir.path(), "time");
    assert!(dir.path().join("s.csv").exists());
    assert!(!dir.path().join("s.phi.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let a = workspace();
    let b = workspace();
    pipeline(a.path(), "frequency");
    pipeline(b.path(), "frequency");
    for f in ["d.csv", "m/model.ckpt", "m/train_report.json", "s.csv", "s.phi.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between reruns");
    }
}

#[test]
fn marginal_metric_in_one_domain() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["synth", "--config", "c.toml", "--n-samples", "40", "--out", "a.csv"]);
    ok(d, &["synth", "--config", "c.toml", "--seed", "4", "--n-samples", "40", "--out", "b.csv"]);
    ok(d, &[
        "evaluate", "--train", "a.csv", "--samples", "b.csv", "--metric", "marginal", "--domain", "frequency",
        "--out", "e.json",
    ]);
    let eval = json(&d.join("e.json"));
    let results = eval["results"].as_array().unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0]["per_coordinate"].as_array().unwrap().len(), 8);
}

#[test]
fn analyze_reports_pairs_and_intervals() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["synth", "--config", "c.toml", "--n-samples", "25", "--out", "d.csv"]);
    ok(d, &["analyze", "--data", "d.csv", "--out", "an"]);
    let pairs = std::fs::read_to_string(d.join("an/delocalization.csv")).unwrap();
    assert!(pairs.starts_with("sample_id,delta_time,delta_freq\n"));
    assert_eq!(pairs.lines().count(), 26);
    let summary = json(&d.join("an/summary.json"));
    for key in ["delta_time", "delta_freq"] {
        assert!(summary[key]["mean"].is_f64());
        assert!(summary[key]["ci95"].as_f64().unwrap() > 0.0);
    }
    // Frequency-localized data spreads less in frequency than in time.
    assert!(summary["delta_freq"]["mean"].as_f64().unwrap() < summary["delta_time"]["mean"].as_f64().unwrap());
}

#[test]
fn intervene_at_zero_width_keeps_the_data() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["synth", "--config", "c.toml", "--n-samples", "10", "--out", "d.csv"]);
    ok(d, &["intervene", "--data", "d.csv", "--sigma-list", "0,3", "--out", "iv"]);
    let strip = |text: String| -> Vec<String> {
        text.lines()
            .skip(1)
            .map(|l| l.split(',').take(3).collect::<Vec<_>>().join(","))
            .collect()
    };
    let original = strip(std::fs::read_to_string(d.join("d.csv")).unwrap());
    let smoothed = strip(std::fs::read_to_string(d.join("iv/sigma_0.csv")).unwrap());
    assert_eq!(original, smoothed);
    let meta = json(&d.join("iv/metadata.json"));
    let sigmas = meta["details"]["sigmas"].as_array().unwrap();
    assert_eq!(sigmas[0]["kernel_sum"], 1.0);
    assert!(sigmas[1]["kernel_sum"].as_f64().unwrap() > 1.0);
}

#[test]
fn crossover_table_is_complete_and_resumable() {
    let dir = workspace();
    let d = dir.path();
    std::fs::write(
        d.join("x.toml"),
        TINY.replace("n = 8", "n = 4").replace("epochs = 3", "epochs = 2"),
    )
    .unwrap();
    ok(d, &["synth", "--config", "x.toml", "--kind", "gaussian_iid", "--n-samples", "60", "--out", "b.csv"]);
    let args = [
        "crossover", "--config", "x.toml", "--data", "b.csv", "--sigma-list", "0,3", "--seed", "1", "--out", "t.csv",
    ];
    ok(d, &args);
    let first = std::fs::read_to_string(d.join("t.csv")).unwrap();
    assert!(first.starts_with(
        "sigma,diffusion_domain,metric_domain,sw_mean,sw_2se,delta_time_median,delta_freq_median,seed\n"
    ));
    assert_eq!(first.lines().count(), 1 + 2 * 2 * 2);
    assert_eq!(std::fs::read_dir(d.join("t.cells")).unwrap().count(), 4);
    let meta = json(&d.join("t.meta.json"));
    assert_eq!(meta["seeds"]["run_seed"], 1);
    assert_eq!(meta["seeds"]["split_seed"], 3);
    assert_eq!(meta["details"]["sigmas"].as_array().unwrap().len(), 2);

    ok(d, &args);
    assert_eq!(std::fs::read_to_string(d.join("t.csv")).unwrap(), first);
}

#[test]
fn verify_mirrored_bm_passes() {
    let dir = workspace();
    ok(dir.path(), &["verify", "--suite", "mirrored-bm", "--seed", "7", "--out", "v.json"]);
    let report = json(&dir.path().join("v.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["max_mirror_deviation"], 0.0);
    assert_eq!(report["n_paths"], 100_000);
    assert!(dir.path().join("v.meta.json").exists());
}

#[test]
fn verify_dft_and_commutation_pass() {
    let dir = workspace();
    ok(dir.path(), &["verify", "--suite", "dft", "--out", "dft.json"]);
    assert_eq!(json(&dir.path().join("dft.json"))["pass"], true);
    ok(dir.path(), &["verify", "--suite", "commutation", "--out", "com.json"]);
    assert_eq!(json(&dir.path().join("com.json"))["pass"], true);
}

#[test]
fn failing_checks_exit_nonzero() {
    let dir = workspace();
    // Too few paths for the tolerance: the run completes but reports failure.
    let out = run(dir.path(), &["verify", "--suite", "mirrored-bm", "--paths", "10000", "--n", "16", "--out", "v.json"]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).starts_with("error[verify]: "));
    assert_eq!(json(&dir.path().join("v.json"))["pass"], false);
}

#[test]
fn errors_are_single_categorized_lines() {
    let dir = workspace();
    let d = dir.path();

    let out = run(d, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error[usage]: "));

    std::fs::write(d.join("bad.toml"), "[training]\nepochs = 0\n").unwrap();
    let out = run(d, &["synth", "--config", "bad.toml", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error[config]: "));

    std::fs::write(d.join("typo.toml"), "[training]\nepoch = 3\n").unwrap();
    let out = run(d, &["synth", "--config", "typo.toml", "--out", "x.csv"]);
    assert!(stderr_line(&out).starts_with("error[config]: "));

    let out = run(d, &["train", "--data", "missing.csv", "--out", "m"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error[io]: "));

    std::fs::write(d.join("ragged.csv"), "sample_id,time_index,f0\n0,0,1\n0,1,2\n1,0,3\n").unwrap();
    let out = run(d, &["analyze", "--data", "ragged.csv", "--out", "an"]);
    assert!(stderr_line(&out).starts_with("error[data]: "));

    let out = run(d, &["train", "--config", "c.toml", "--data", "d.csv", "--domain", "space", "--out", "m"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error[usage]: "));

    let out = run(d, &["sample", "--model", "c.toml", "--out", "s.csv"]);
    assert!(stderr_line(&out).starts_with("error[checkpoint]: "));
}
