//! Minibatch training with AdamW and a warmup-cosine learning-rate schedule.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::loss::DsmBatch;
use super::mlp::{MlpArchitecture, MlpScore};
use super::ScoreModel;
use crate::config::{LossWeighting, ValidatedConfig};
use crate::diffusion::VpSchedule;
use crate::error::{Error, Result};
use crate::series::{Domain, TimeSeries};
use crate::spectral::to_phi;
use crate::stochastic::Rng;

const SHUFFLE_STREAM: u64 = 0x7368;
const NOISE_STREAM: u64 = 0x6e6f;
const VALIDATION_STREAM: u64 = 0x7661;

/// Learning rate for a 0-based epoch: linear warmup to `lr_max` over
/// `warmup` epochs, then half-cosine decay towards zero at `epochs`.
pub fn cosine_lr(epoch: usize, epochs: usize, warmup: usize, lr_max: f64) -> f64 {
    if epoch < warmup {
        return lr_max * (epoch + 1) as f64 / warmup as f64;
    }
    let span = epochs.saturating_sub(warmup).max(1) as f64;
    let progress = ((epoch - warmup) as f64 / span).min(1.0);
    lr_max * 0.5 * (1.0 + (PI * progress).cos())
}

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl AdamW {
    pub fn new(n_params: usize, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "optimizer/parameter mismatch");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            params[i] -= lr * self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub domain: Domain,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept: the lowest validation loss.
    pub selected_epoch: usize,
    pub best_val_loss: f64,
}

/// Flattens series into model inputs: raw values for the time domain, chart
/// coordinates of the spectrum for the frequency domain.
pub fn encode_series(series: &[TimeSeries], domain: Domain) -> Result<Array2<f64>> {
    let Some(first) = series.first() else {
        return Ok(Array2::zeros((0, 0)));
    };
    let shape = first.shape();
    let d = shape.0 * shape.1;
    let mut out = Array2::zeros((series.len(), d));
    for (mut row, x) in out.axis_iter_mut(Axis(0)).zip(series) {
        if x.shape() != shape {
            return Err(Error::Shape(format!(
                "series of shape {:?} mixed with {:?}",
                x.shape(),
                shape
            )));
        }
        let flat = match domain {
            Domain::Time => x.to_flat(),
            Domain::Frequency => to_phi(x).to_flat(),
        };
        row.assign(&ndarray::ArrayView1::from(&flat));
    }
    Ok(out)
}

fn draw_batch(
    data: &Array2<f64>,
    domain: Domain,
    n: usize,
    sched: &VpSchedule,
    steps: usize,
    rng: &mut Rng,
) -> Result<DsmBatch> {
    match domain {
        Domain::Time => DsmBatch::time(data.view(), sched, steps, rng),
        Domain::Frequency => DsmBatch::freq(data.view(), n, sched, steps, rng),
    }
}

fn batch_weights(batch: &DsmBatch, sched: &VpSchedule, weighting: LossWeighting) -> Vec<f64> {
    batch
        .t
        .iter()
        .map(|&t| weighting.weight(sched.sigma(t)))
        .collect()
}

fn validation_loss(
    model: &MlpScore,
    data: &Array2<f64>,
    batch_size: usize,
    sched: &VpSchedule,
    steps: usize,
    weighting: LossWeighting,
    seed: u64,
) -> Result<f64> {
    let mut rng = Rng::new(seed, VALIDATION_STREAM);
    let n = model.architecture().n;
    let mut total = 0.0;
    for chunk in data.axis_chunks_iter(Axis(0), batch_size) {
        let batch = draw_batch(&chunk.to_owned(), model.architecture().domain, n, sched, steps, &mut rng)?;
        let scores = model.score_batch(batch.perturbed.view(), &batch.t)?;
        total += batch.weighted_loss(&scores, &batch_weights(&batch, sched, weighting)) * chunk.nrows() as f64;
    }
    Ok(total / data.nrows() as f64)
}

/// Trains a fresh network on `train_set` and keeps the parameters of the
/// epoch with the lowest validation loss. Validation noise is identical in
/// every epoch.
pub fn train(
    train_set: &[TimeSeries],
    val_set: &[TimeSeries],
    domain: Domain,
    cfg: &ValidatedConfig,
) -> Result<(MlpScore, TrainReport)> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data(format!(
            "training needs nonempty splits, got {} train and {} validation samples",
            train_set.len(),
            val_set.len()
        )));
    }
    cfg.check_dataset_size(train_set.len())?;
    let train_data = encode_series(train_set, domain)?;
    let val_data = encode_series(val_set, domain)?;
    let arch = MlpArchitecture::from_config(cfg, domain);
    if train_data.ncols() != arch.input_dim() || val_data.ncols() != arch.input_dim() {
        return Err(Error::Shape(format!(
            "config expects {}x{} series",
            arch.n, arch.m
        )));
    }
    let n = arch.n;
    let mut model = MlpScore::new(arch)?;
    let sched = *model.schedule();
    let tc = &cfg.training;
    let steps = cfg.diffusion.steps;
    let mut opt = AdamW::new(model.n_params(), tc.weight_decay);
    let mut shuffle_rng = Rng::new(cfg.seed, SHUFFLE_STREAM);
    let mut noise_rng = Rng::new(cfg.seed, NOISE_STREAM);

    let mut records = Vec::with_capacity(tc.epochs);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut order: Vec<usize> = (0..train_data.nrows()).collect();
    for epoch in 0..tc.epochs {
        let lr = cosine_lr(epoch, tc.epochs, tc.warmup_epochs, tc.lr_max);
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(tc.batch_size).enumerate() {
            let data = train_data.select(Axis(0), idx);
            let batch = draw_batch(&data, domain, n, &sched, steps, &mut noise_rng)?;
            let weights = batch_weights(&batch, &sched, tc.loss_weighting);
            let (loss, grads) = batch.weighted_loss_and_grad(&model, &weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "training loss",
                    location: format!("epoch {epoch}, batch {b}"),
                });
            }
            opt.step(model.params_mut(), &grads, lr);
            epoch_loss += loss * idx.len() as f64;
        }
        let train_loss = epoch_loss / train_data.nrows() as f64;
        let val_loss = validation_loss(&model, &val_data, tc.batch_size, &sched, steps, tc.loss_weighting, cfg.seed)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite {
                what: "validation loss",
                location: format!("epoch {epoch}"),
            });
        }
        if best.as_ref().is_none_or(|(_, v, _)| val_loss < *v) {
            best = Some((epoch, val_loss, model.params().to_vec()));
        }
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
        });
    }
    let (selected_epoch, best_val_loss, params) = best.expect("at least one epoch");
    model.set_params(params)?;
    Ok((
        model,
        TrainReport {
            domain,
            epochs: records,
            selected_epoch,
            best_val_loss,
        },
    ))
}
