//! Run configuration.
//!
//! A [`RunConfig`] is loaded from a TOML file with one section per
//! subsystem. Every key is optional; missing keys take the defaults below,
//! which follow the reference training recipe (VP-SDE with `beta` in
//! `[0.1, 20]`, 1000 integrator steps, 200 epochs of AdamW at batch size 64,
//! 20 warmup epochs, peak learning rate `1e-3`, 10 000 projections for the
//! sliced Wasserstein distance).
//!
//! ```toml
//! seed = 7
//! domain = "frequency"
//!
//! [data]
//! n = 32
//! m = 1
//! val_fraction = 0.1
//!
//! [diffusion]
//! beta_min = 0.1
//! beta_max = 20.0
//! steps = 1000
//!
//! [training]
//! epochs = 200
//! batch_size = 64
//! warmup_epochs = 20
//! lr_max = 1e-3
//! weight_decay = 0.01
//! loss_weighting = "sigma2"
//!
//! [model]
//! hidden_sizes = [256, 256, 256]
//! time_features = 64
//! time_scale = 16.0
//! embed_dim = 64
//! scale_by_sigma = true
//! gaussian_skip = false
//!
//! [metrics]
//! n_projections = 10000
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::error::{Error, Result};
use crate::series::Domain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Time steps per series.
    pub n: usize,
    /// Features per time step.
    pub m: usize,
    /// Fraction of samples held out for validation.
    pub val_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n: 32,
            m: 1,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    /// Euler–Maruyama steps over the unit diffusion horizon.
    pub steps: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            beta_min: 0.1,
            beta_max: 20.0,
            steps: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub lr_max: f64,
    pub weight_decay: f64,
    /// Per-sample weight of the score-matching residual.
    pub loss_weighting: LossWeighting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossWeighting {
    /// Plain squared residual.
    None,
    /// Residual scaled by `sigma(t)^2`.
    Sigma2,
}

impl LossWeighting {
    pub fn weight(self, sigma: f64) -> f64 {
        match self {
            LossWeighting::None => 1.0,
            LossWeighting::Sigma2 => sigma * sigma,
        }
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            warmup_epochs: 20,
            lr_max: 1e-3,
            weight_decay: 0.01,
            loss_weighting: LossWeighting::Sigma2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_sizes: Vec<usize>,
    /// Number of random Fourier frequencies in the time embedding.
    pub time_features: usize,
    /// Standard deviation of the random Fourier frequencies.
    pub time_scale: f64,
    /// Width of the learnable dense layer on top of the Fourier features.
    pub embed_dim: usize,
    /// Divide the network output by the perturbation scale `sigma(t)`.
    pub scale_by_sigma: bool,
    /// Add the score of standardized white noise, `-x`, to the network
    /// output, so the network learns only the deviation from it.
    pub gaussian_skip: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![256, 256, 256],
            time_features: 64,
            time_scale: 16.0,
            embed_dim: 64,
            scale_by_sigma: true,
            gaussian_skip: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub n_projections: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            n_projections: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub domain: Domain,
    pub data: DataConfig,
    pub diffusion: DiffusionConfig,
    pub training: TrainingConfig,
    pub model: ModelConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            domain: Domain::Time,
            data: DataConfig::default(),
            diffusion: DiffusionConfig::default(),
            training: TrainingConfig::default(),
            model: ModelConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

/// A configuration that passed [`validate_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(RunConfig);

impl ValidatedConfig {
    pub fn get(&self) -> &RunConfig {
        &self.0
    }

    pub fn into_inner(self) -> RunConfig {
        self.0
    }

    /// Checks the constraint that needs the dataset size.
    pub fn check_dataset_size(&self, n_samples: usize) -> Result<()> {
        if self.0.training.batch_size > n_samples {
            return Err(Error::Config(format!(
                "batch_size ≤ dataset size violated ({} > {n_samples})",
                self.0.training.batch_size
            )));
        }
        Ok(())
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = RunConfig;

    fn deref(&self) -> &RunConfig {
        &self.0
    }
}

fn require(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} violated")))
    }
}

/// Checks every invariant of a configuration, reporting the first violation.
pub fn validate_config(cfg: RunConfig) -> Result<ValidatedConfig> {
    require(cfg.data.n >= 1, "N ≥ 1")?;
    require(cfg.data.m >= 1, "M ≥ 1")?;
    require(
        cfg.data.val_fraction > 0.0 && cfg.data.val_fraction < 1.0,
        "0 < val_fraction < 1",
    )?;
    require(
        cfg.diffusion.beta_min.is_finite() && cfg.diffusion.beta_min > 0.0,
        "β_min > 0",
    )?;
    require(
        cfg.diffusion.beta_max.is_finite() && cfg.diffusion.beta_max > 0.0,
        "β_max > 0",
    )?;
    require(cfg.diffusion.beta_min < cfg.diffusion.beta_max, "β_min < β_max")?;
    require(cfg.diffusion.steps >= 1, "diffusion_steps ≥ 1")?;
    require(cfg.training.epochs >= 1, "epochs ≥ 1")?;
    require(cfg.training.batch_size >= 1, "batch_size ≥ 1")?;
    require(cfg.training.warmup_epochs >= 1, "warmup_epochs ≥ 1")?;
    require(
        cfg.training.lr_max.is_finite() && cfg.training.lr_max > 0.0,
        "lr_max > 0",
    )?;
    require(
        cfg.training.weight_decay.is_finite() && cfg.training.weight_decay >= 0.0,
        "weight_decay ≥ 0",
    )?;
    require(!cfg.model.hidden_sizes.is_empty(), "hidden_sizes nonempty")?;
    require(
        cfg.model.hidden_sizes.iter().all(|&h| h >= 1),
        "hidden_sizes positive",
    )?;
    require(cfg.model.time_features >= 1, "time_features ≥ 1")?;
    require(cfg.model.embed_dim >= 1, "embed_dim ≥ 1")?;
    require(
        cfg.model.time_scale.is_finite() && cfg.model.time_scale > 0.0,
        "time_scale > 0",
    )?;
    require(cfg.metrics.n_projections >= 1, "n_projections ≥ 1")?;
    Ok(ValidatedConfig(cfg))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().replace('\n', " ")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config is always serializable");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
