use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::{CliError, Common};

#[derive(Debug, Serialize)]
struct Versions {
    freqdiff: &'static str,
    cli: &'static str,
    checkpoint_format: &'static str,
}

#[derive(Debug, Serialize)]
struct RunMetadata<'a> {
    command: &'a str,
    config_hash: &'a str,
    seeds: &'a BTreeMap<String, u64>,
    versions: Versions,
    threads: usize,
    started_unix_seconds: u64,
    wall_time_seconds: f64,
    inputs: &'a BTreeMap<String, String>,
    outputs: Vec<String>,
    details: &'a Value,
}

/// Collects provenance while a command runs.
pub struct Recorder {
    command: &'static str,
    started: Instant,
    started_unix: u64,
    threads: usize,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub details: Value,
}

impl Recorder {
    pub fn start(command: &'static str, common: &Common) -> Self {
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            command,
            started: Instant::now(),
            started_unix,
            threads: common.threads,
            config_hash: String::new(),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.to_string(), path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes the metadata JSON to `path`.
    pub fn finish(self, path: &Path) -> Result<(), CliError> {
        let meta = RunMetadata {
            command: self.command,
            config_hash: &self.config_hash,
            seeds: &self.seeds,
            versions: Versions {
                freqdiff: freqdiff::VERSION,
                cli: env!("CARGO_PKG_VERSION"),
                checkpoint_format: std::str::from_utf8(freqdiff::scoring::CHECKPOINT_MAGIC)
                    .unwrap_or("")
                    .trim_end(),
            },
            threads: self.threads,
            started_unix_seconds: self.started_unix,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            inputs: &self.inputs,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            details: &self.details,
        };
        crate::commands::write_json(path, &meta)
    }
}

/// Sidecar of a single-file output: `table.csv` → `table.meta.json`.
pub fn sidecar(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}
