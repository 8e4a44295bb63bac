//! Score models, denoising score-matching losses and training.
//!
//! A score model maps a batch of flattened `N x M` inputs and their diffusion
//! times to a batch of score estimates of the same shape. Time-domain models
//! consume series; frequency-domain models consume chart coordinates of the
//! spectrum, which carry the mirror symmetry implicitly, and emit the chart
//! score premultiplied by `Lambda^2`, the quantity score matching regresses on.

mod checkpoint;
mod equivalence;
mod loss;
mod mlp;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader,
    CHECKPOINT_MAGIC,
};
pub use equivalence::{equivalence_check, EquivalenceReport};
pub use loss::{
    dsm_loss_freq, dsm_loss_time, dsm_loss_value_freq, dsm_loss_value_time, DsmBatch,
};
pub use mlp::{MlpArchitecture, MlpScore};
pub use train::{cosine_lr, encode_series, train, AdamW, EpochRecord, TrainReport};

use ndarray::{Array2, ArrayView2};

use crate::diffusion::VpSchedule;
use crate::error::{Error, Result};
use crate::series::Domain;
use crate::spectral::lambda_scaling;

pub trait ScoreModel {
    /// Representation the model consumes and emits.
    fn domain(&self) -> Domain;

    /// `(N, M)` of a single input.
    fn shape(&self) -> (usize, usize);

    /// Scores for a batch: one flattened input per row, one time per row.
    fn score_batch(&self, inputs: ArrayView2<f64>, t: &[f64]) -> Result<Array2<f64>>;

    /// Score of a single `N x M` input.
    fn score(&self, input: &Array2<f64>, t: f64) -> Result<Array2<f64>> {
        let (n, m) = self.shape();
        if input.dim() != (n, m) {
            return Err(Error::Shape(format!(
                "model expects {n}x{m} input, got {}x{}",
                input.nrows(),
                input.ncols()
            )));
        }
        let flat = input.to_shape((1, n * m)).expect("contiguous reshape").to_owned();
        let out = self.score_batch(flat.view(), &[t])?;
        Ok(out.into_shape_with_order((n, m)).expect("same length"))
    }
}

pub(crate) fn check_batch(model_dim: usize, inputs: &ArrayView2<f64>, t: &[f64]) -> Result<()> {
    if inputs.ncols() != model_dim {
        return Err(Error::Shape(format!(
            "model expects rows of length {model_dim}, got {}",
            inputs.ncols()
        )));
    }
    if t.len() != inputs.nrows() {
        return Err(Error::Shape(format!(
            "{} inputs but {} diffusion times",
            inputs.nrows(),
            t.len()
        )));
    }
    for &ti in t {
        crate::diffusion::check_positive_time(ti)?;
    }
    Ok(())
}

/// The zero vector field.
#[derive(Debug, Clone)]
pub struct ZeroScore {
    domain: Domain,
    n: usize,
    m: usize,
}

impl ZeroScore {
    pub fn new(domain: Domain, n: usize, m: usize) -> Self {
        Self { domain, n, m }
    }
}

impl ScoreModel for ZeroScore {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    fn score_batch(&self, inputs: ArrayView2<f64>, t: &[f64]) -> Result<Array2<f64>> {
        check_batch(self.n * self.m, &inputs, t)?;
        Ok(Array2::zeros(inputs.raw_dim()))
    }
}

/// Exact score of the diffused law of Gaussian data.
///
/// For data `N(mu0, s0^2 C)` the marginal at time `t` is
/// `N(alpha mu0, (alpha^2 s0^2 + sigma^2) C)`, with `C = I` in the time
/// domain and `C = Lambda^2` in chart coordinates, so the score is
/// `-C^{-1} (x - alpha mu0) / (alpha^2 s0^2 + sigma^2)`.
#[derive(Debug, Clone)]
pub struct GaussianOracle {
    domain: Domain,
    mean: Array2<f64>,
    scale: f64,
    schedule: VpSchedule,
    inv_cov: Vec<f64>,
}

impl GaussianOracle {
    /// `mean` is expressed in the model's own coordinates (chart
    /// coordinates for the frequency domain).
    pub fn new(domain: Domain, mean: Array2<f64>, scale: f64, schedule: VpSchedule) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Value(format!("oracle scale must be > 0, got {scale}")));
        }
        let (n, m) = mean.dim();
        let inv_cov = match domain {
            Domain::Time => vec![1.0; n * m],
            Domain::Frequency => lambda_scaling(n)
                .powi(-2)
                .into_iter()
                .flat_map(|v| std::iter::repeat_n(v, m))
                .collect(),
        };
        Ok(Self {
            domain,
            mean,
            scale,
            schedule,
            inv_cov,
        })
    }

    /// Oracle for standard data: `N(0, I)` series, whose chart coordinates are
    /// `N(0, Lambda^2)`.
    pub fn standard(domain: Domain, n: usize, m: usize, schedule: VpSchedule) -> Self {
        Self::new(domain, Array2::zeros((n, m)), 1.0, schedule).expect("unit scale")
    }

    /// The same oracle premultiplied by `Lambda^2` in chart coordinates, the
    /// form frequency samplers consume. A no-op in the time domain.
    pub fn lambda_adjusted(mut self) -> Self {
        self.inv_cov.fill(1.0);
        self
    }
}

impl ScoreModel for GaussianOracle {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn shape(&self) -> (usize, usize) {
        self.mean.dim()
    }

    fn score_batch(&self, inputs: ArrayView2<f64>, t: &[f64]) -> Result<Array2<f64>> {
        check_batch(self.mean.len(), &inputs, t)?;
        let mean: Vec<f64> = self.mean.iter().copied().collect();
        let mut out = inputs.to_owned();
        for (mut row, &ti) in out.rows_mut().into_iter().zip(t) {
            let alpha = self.schedule.alpha(ti);
            let sigma = self.schedule.sigma(ti);
            let var = alpha * alpha * self.scale * self.scale + sigma * sigma;
            for (j, v) in row.iter_mut().enumerate() {
                *v = -self.inv_cov[j] * (*v - alpha * mean[j]) / var;
            }
        }
        Ok(out)
    }
}
