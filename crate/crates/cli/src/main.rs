//! `freqdiff` command-line front end.
//!
//! Every command writes its artifacts plus a metadata JSON next to them.
//! Failures print one line, `error[<category>]: <message>`, and exit nonzero.

mod commands;
mod metadata;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use freqdiff::labkit::KernelNorm;
use freqdiff::Domain;

#[derive(Debug, Parser)]
#[command(name = "freqdiff", version, about = "Score-based diffusion of time series in the time and frequency domains")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Overrides shared by all commands.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration. Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the number of diffusion steps.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Overrides the number of sliced Wasserstein projections.
    #[arg(long = "n-projections", global = true)]
    pub n_projections: Option<usize>,
    /// Upper bound on worker threads. The computations run sequentially.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train a score model on a CSV dataset.
    Train(TrainArgs),
    /// Draw samples from a trained model.
    Sample(SampleArgs),
    /// Distances between a training set and generated samples.
    Evaluate(EvaluateArgs),
    /// Per-sample delocalization in both domains.
    Analyze(AnalyzeArgs),
    /// Apply spectral Gaussian smoothing to a dataset.
    Intervene(InterveneArgs),
    /// Smoothing-width sweep comparing time and frequency models.
    Crossover(CrossoverArgs),
    /// Built-in numerical self-checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// freq_localized, time_localized or gaussian_iid.
    #[arg(long, default_value = "freq_localized")]
    pub kind: String,
    #[arg(long = "n-samples", default_value_t = 2000)]
    pub n_samples: usize,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Diffusion domain; the configured one when omitted.
    #[arg(long)]
    pub domain: Option<Domain>,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "n-samples", default_value_t = 1000)]
    pub n_samples: usize,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep standardized units instead of mapping back to data units.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricKind {
    Sliced,
    Marginal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricDomain {
    Time,
    Frequency,
    Both,
}

impl MetricDomain {
    pub fn domains(self) -> Vec<Domain> {
        match self {
            MetricDomain::Time => vec![Domain::Time],
            MetricDomain::Frequency => vec![Domain::Frequency],
            MetricDomain::Both => Domain::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Reference data.
    #[arg(long, alias = "data")]
    pub train: PathBuf,
    /// Generated samples.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, value_enum, default_value = "sliced")]
    pub metric: MetricKind,
    #[arg(long, value_enum, default_value = "both")]
    pub domain: MetricDomain,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InterveneArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated kernel widths.
    #[arg(long = "sigma-list", value_delimiter = ',', required = true)]
    pub sigma_list: Vec<f64>,
    /// literal or sum_to_one.
    #[arg(long = "kernel-norm", default_value = "literal")]
    pub kernel_norm: KernelNorm,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrossoverArgs {
    /// Base dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated kernel widths.
    #[arg(long = "sigma-list", value_delimiter = ',', default_value = "0,5,7,10,20")]
    pub sigma_list: Vec<f64>,
    /// literal or sum_to_one.
    #[arg(long = "kernel-norm", default_value = "literal")]
    pub kernel_norm: KernelNorm,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of finished cells; defaults to `<out>.cells`.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Suite {
    /// Statistics of the mirrored Brownian motion.
    MirroredBm,
    /// Unitarity and round trips of the DFT.
    Dft,
    /// Forward process in both domains on a shared path.
    Commutation,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Series length for mirrored-bm.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Feature count for mirrored-bm.
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Simulated paths for mirrored-bm.
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure of a command, tagged with a stable category.
#[derive(Debug)]
pub enum CliError {
    Core(freqdiff::Error),
    Usage(String),
    Check(String),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Usage(_) => "usage",
            CliError::Check(_) => "verify",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) | CliError::Check(m) => f.write_str(m),
        }
    }
}

impl From<freqdiff::Error> for CliError {
    fn from(e: freqdiff::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fail(category: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("error[{category}]: {}", one_line(message));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "), 2);
        }
    };
    if cli.common.threads == 0 {
        return fail("usage", "--threads must be at least 1", 2);
    }
    let common = &cli.common;
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(common, a),
        Command::Train(a) => commands::train(common, a),
        Command::Sample(a) => commands::sample(common, a),
        Command::Evaluate(a) => commands::evaluate(common, a),
        Command::Analyze(a) => commands::analyze(common, a),
        Command::Intervene(a) => commands::intervene(common, a),
        Command::Crossover(a) => commands::crossover(common, a),
        Command::Verify(a) => commands::verify(common, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.category(), &e.to_string(), 1),
    }
}
