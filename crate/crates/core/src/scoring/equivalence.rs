//! Numerical check that frequency-domain score matching equals time-domain
//! score matching with the pulled-back score `U* phi_inv(s(phi(U x), t))`.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::ScoreModel;
use crate::diffusion::{check_positive_time, VpSchedule};
use crate::error::{Error, Result};
use crate::series::{Domain, PhiVector, TimeSeries};
use crate::spectral::{chart_matrix, lambda_scaling, phi_inv, to_phi};
use crate::stochastic::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub loss_freq: f64,
    pub loss_time: f64,
    pub difference: f64,
}

impl EquivalenceReport {
    /// `|L_freq - L_time| <= 1e-8 (1 + L_time)`.
    pub fn holds(&self) -> bool {
        self.difference <= 1e-8 * (1.0 + self.loss_time)
    }
}

/// Evaluates both losses at a fixed time on one shared noise draw.
///
/// The time-domain noise `eps` is drawn per sample; the chart noise is
/// `Lambda^{-1} Q eps`, with `Q = phi U`. The frequency loss measures the
/// residual through the full complex spectrum, the time loss uses the
/// pulled-back score `Q^T Lambda^{-2} s`.
pub fn equivalence_check(
    model: &dyn ScoreModel,
    batch: &[TimeSeries],
    sched: &VpSchedule,
    t: f64,
    rng: &mut Rng,
) -> Result<EquivalenceReport> {
    if model.domain() != Domain::Frequency {
        return Err(Error::Value("equivalence check needs a frequency-domain model".into()));
    }
    if batch.is_empty() {
        return Err(Error::Value("empty batch".into()));
    }
    check_positive_time(t)?;
    let (n, m) = model.shape();
    for x in batch {
        if x.shape() != (n, m) {
            return Err(Error::Shape(format!(
                "model expects {n}x{m} series, got {}x{}",
                x.len(),
                x.n_features()
            )));
        }
    }
    let alpha = sched.alpha(t);
    let sigma = sched.sigma(t);
    let lambda = lambda_scaling(n);
    let q = chart_matrix(n);
    let pull_back = {
        let mut inv_sq = Array2::<f64>::eye(n);
        for (k, d) in lambda.diag().iter().enumerate() {
            inv_sq[[k, k]] = d.powi(-2);
        }
        q.t().dot(&inv_sq)
    };

    let b = batch.len();
    let mut inputs = Array2::<f64>::zeros((b, n * m));
    let mut eps_time = Vec::with_capacity(b);
    let mut eps_chart = Vec::with_capacity(b);
    for (i, x0) in batch.iter().enumerate() {
        let eps = rng.normal_matrix(n, m);
        let mut e_chart = q.dot(&eps);
        lambda.apply(&mut e_chart, -1);
        let mut shaped = e_chart.clone();
        lambda.apply(&mut shaped, 1);
        let z0 = to_phi(x0);
        let zt = z0.values() * alpha + &shaped * sigma;
        inputs
            .row_mut(i)
            .assign(&zt.to_shape(n * m).expect("contiguous"));
        eps_time.push(eps);
        eps_chart.push(e_chart);
    }
    let scores = model.score_batch(inputs.view(), &vec![t; b])?;

    let mut loss_freq = 0.0;
    let mut loss_time = 0.0;
    for (i, row) in scores.axis_iter(Axis(0)).enumerate() {
        let s = row.to_shape((n, m)).expect("contiguous").to_owned();
        let mut shaped = eps_chart[i].clone();
        lambda.apply(&mut shaped, 1);
        let residual = &s + &(shaped / sigma);
        let spectrum = phi_inv(&PhiVector::new(residual)?);
        loss_freq += spectrum.energy();

        let pulled = pull_back.dot(&s);
        let r = pulled + &(&eps_time[i] / sigma);
        loss_time += r.iter().map(|v| v * v).sum::<f64>();
    }
    loss_freq /= b as f64;
    loss_time /= b as f64;
    Ok(EquivalenceReport {
        loss_freq,
        loss_time,
        difference: (loss_freq - loss_time).abs(),
    })
}
