//! Denoising score-matching losses.

use ndarray::{Array2, ArrayView2, Axis};

use super::mlp::MlpScore;
use super::ScoreModel;
use crate::diffusion::{VpSchedule, T_END};
use crate::error::{Error, Result};
use crate::spectral::lambda_scaling;
use crate::stochastic::Rng;

/// One perturbed minibatch with its regression targets.
///
/// Rows are flattened `N x M` samples. For every row the diffusion time is
/// drawn first, then the noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmBatch {
    pub t: Vec<f64>,
    pub noise: Array2<f64>,
    pub perturbed: Array2<f64>,
    pub target: Array2<f64>,
}

impl DsmBatch {
    /// Perturbs `data` with per-coordinate noise shaping `shape`:
    /// `x_t = alpha x0 + sigma shape eps`, target `-shape eps / sigma`.
    /// Diffusion times are uniform on `[T/steps, T)`.
    pub fn draw(
        data: ArrayView2<f64>,
        shape: &[f64],
        sched: &VpSchedule,
        steps: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Value("empty batch".into()));
        }
        if data.ncols() != shape.len() {
            return Err(Error::Shape(format!(
                "batch rows of length {} but noise shaping of length {}",
                data.ncols(),
                shape.len()
            )));
        }
        if steps == 0 {
            return Err(Error::Value("steps ≥ 1 required".into()));
        }
        let t_min = T_END / steps as f64;
        let (b, d) = data.dim();
        let mut t = Vec::with_capacity(b);
        let mut noise = Array2::zeros((b, d));
        let mut perturbed = Array2::zeros((b, d));
        let mut target = Array2::zeros((b, d));
        for i in 0..b {
            let ti = t_min + (T_END - t_min) * rng.uniform();
            let alpha = sched.alpha(ti);
            let sigma = sched.sigma(ti);
            for j in 0..d {
                let e = rng.normal();
                let shaped = shape[j] * e;
                noise[[i, j]] = e;
                perturbed[[i, j]] = alpha * data[[i, j]] + sigma * shaped;
                target[[i, j]] = -shaped / sigma;
            }
            t.push(ti);
        }
        Ok(Self {
            t,
            noise,
            perturbed,
            target,
        })
    }

    /// Time-domain draw: identity noise shaping.
    pub fn time(data: ArrayView2<f64>, sched: &VpSchedule, steps: usize, rng: &mut Rng) -> Result<Self> {
        let ones = vec![1.0; data.ncols()];
        Self::draw(data, &ones, sched, steps, rng)
    }

    /// Chart-coordinate draw for `N x M` samples: noise shaped by Lambda.
    pub fn freq(
        data: ArrayView2<f64>,
        n: usize,
        sched: &VpSchedule,
        steps: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if n == 0 || data.ncols() % n != 0 {
            return Err(Error::Shape(format!(
                "rows of length {} do not hold N = {n} frequencies",
                data.ncols()
            )));
        }
        let m = data.ncols() / n;
        let shape: Vec<f64> = lambda_scaling(n)
            .diag()
            .iter()
            .flat_map(|&l| std::iter::repeat_n(l, m))
            .collect();
        Self::draw(data, &shape, sched, steps, rng)
    }

    /// Mean squared Frobenius deviation of `scores` from the targets.
    pub fn loss(&self, scores: &Array2<f64>) -> f64 {
        let diff = scores - &self.target;
        diff.iter().map(|v| v * v).sum::<f64>() / self.t.len() as f64
    }

    /// Weighted mean of per-sample squared residuals, `weights[i]` for row `i`.
    pub fn weighted_loss(&self, scores: &Array2<f64>, weights: &[f64]) -> f64 {
        let diff = scores - &self.target;
        diff.axis_iter(Axis(0))
            .zip(weights)
            .map(|(row, w)| w * row.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / self.t.len() as f64
    }

    /// Weighted loss and its parameter gradient.
    pub fn weighted_loss_and_grad(
        &self,
        model: &MlpScore,
        weights: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let (scores, cache) = model.forward(self.perturbed.view(), &self.t)?;
        let mut diff = scores - &self.target;
        let b = self.t.len() as f64;
        let mut loss = 0.0;
        for (mut row, &w) in diff.axis_iter_mut(Axis(0)).zip(weights) {
            loss += w * row.iter().map(|v| v * v).sum::<f64>();
            row.mapv_inplace(|v| v * 2.0 * w / b);
        }
        Ok((loss / b, model.backward(&cache, &diff)))
    }

    fn loss_and_grad(&self, model: &MlpScore) -> Result<(f64, Vec<f64>)> {
        self.weighted_loss_and_grad(model, &vec![1.0; self.t.len()])
    }
}

/// Loss value of any time-domain model on flattened series.
pub fn dsm_loss_value_time(
    model: &dyn ScoreModel,
    data: ArrayView2<f64>,
    sched: &VpSchedule,
    steps: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let batch = DsmBatch::time(data, sched, steps, rng)?;
    Ok(batch.loss(&model.score_batch(batch.perturbed.view(), &batch.t)?))
}

/// Loss value of any frequency-domain model on flattened chart coordinates.
pub fn dsm_loss_value_freq(
    model: &dyn ScoreModel,
    data: ArrayView2<f64>,
    sched: &VpSchedule,
    steps: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let batch = DsmBatch::freq(data, model.shape().0, sched, steps, rng)?;
    Ok(batch.loss(&model.score_batch(batch.perturbed.view(), &batch.t)?))
}

/// Loss and parameter gradient on flattened series.
pub fn dsm_loss_time(
    model: &MlpScore,
    data: ArrayView2<f64>,
    sched: &VpSchedule,
    steps: usize,
    rng: &mut Rng,
) -> Result<(f64, Vec<f64>)> {
    DsmBatch::time(data, sched, steps, rng)?.loss_and_grad(model)
}

/// Loss and parameter gradient on flattened chart coordinates.
pub fn dsm_loss_freq(
    model: &MlpScore,
    data: ArrayView2<f64>,
    sched: &VpSchedule,
    steps: usize,
    rng: &mut Rng,
) -> Result<(f64, Vec<f64>)> {
    DsmBatch::freq(data, model.shape().0, sched, steps, rng)?.loss_and_grad(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{MlpArchitecture, ZeroScore};
    use crate::series::Domain;

    fn model(domain: Domain, n: usize, m: usize) -> MlpScore {
        let mut model = MlpScore::new(MlpArchitecture {
            n,
            m,
            domain,
            hidden_sizes: vec![6, 6],
            time_features: 3,
            time_scale: 1.0,
            embed_dim: 4,
            scale_by_sigma: true,
            gaussian_skip: false,
            beta_min: 0.1,
            beta_max: 20.0,
            seed: 2,
        })
        .unwrap();
        let mut rng = Rng::new(8, 0);
        for p in model.params_mut() {
            *p += 0.2 * rng.normal();
        }
        model
    }

    #[test]
    fn identity_shaping_reproduces_time_draw_bit_for_bit() {
        let data = Rng::new(1, 0).normal_matrix(16, 8);
        let sched = VpSchedule::default();
        let a = DsmBatch::time(data.view(), &sched, 1000, &mut Rng::new(4, 0)).unwrap();
        let b = DsmBatch::draw(data.view(), &[1.0; 8], &sched, 1000, &mut Rng::new(4, 0)).unwrap();
        assert_eq!(a, b);
        let time_model = model(Domain::Time, 8, 1);
        let (la, ga) = a.loss_and_grad(&time_model).unwrap();
        let (lb, gb) = b.loss_and_grad(&time_model).unwrap();
        assert_eq!(la.to_bits(), lb.to_bits());
        assert_eq!(ga, gb);
    }

    #[test]
    fn single_frequency_matches_time_loss() {
        let data = Rng::new(1, 0).normal_matrix(10, 3);
        let sched = VpSchedule::default();
        let tm = model(Domain::Time, 1, 3);
        let mut fm = model(Domain::Frequency, 1, 3);
        fm.set_params(tm.params().to_vec()).unwrap();
        let (lt, gt) = dsm_loss_time(&tm, data.view(), &sched, 1000, &mut Rng::new(6, 0)).unwrap();
        let (lf, gf) = dsm_loss_freq(&fm, data.view(), &sched, 1000, &mut Rng::new(6, 0)).unwrap();
        assert_eq!(lt, lf);
        assert_eq!(gt, gf);
    }

    #[test]
    fn injected_target_gives_zero_loss() {
        let data = Rng::new(2, 0).normal_matrix(5, 6);
        let batch = DsmBatch::freq(data.view(), 6, &VpSchedule::default(), 1000, &mut Rng::new(0, 0)).unwrap();
        assert_eq!(batch.loss(&batch.target.clone()), 0.0);
    }

    #[test]
    fn times_respect_lower_cutoff() {
        let data = Array2::zeros((2000, 1));
        let batch = DsmBatch::time(data.view(), &VpSchedule::default(), 10, &mut Rng::new(0, 0)).unwrap();
        assert!(batch.t.iter().all(|&t| (0.1..1.0).contains(&t)));
        assert!(batch.t.iter().any(|&t| t < 0.15));
    }

    /// `E[1/sigma(t)^2]` for `t ~ U(t_min, 1)` by composite Simpson quadrature.
    fn mean_inverse_variance(sched: &VpSchedule, t_min: f64) -> f64 {
        let k = 200_000;
        let h = (1.0 - t_min) / k as f64;
        let f = |t: f64| 1.0 / (1.0 - (-sched.integral(t)).exp());
        let mut acc = f(t_min) + f(1.0);
        for i in 1..k {
            acc += f(t_min + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0 / (1.0 - t_min)
    }

    fn zero_model_loss(domain: Domain, n: usize, m: usize) -> f64 {
        let sched = VpSchedule::default();
        let zero = ZeroScore::new(domain, n, m);
        let data = Array2::zeros((50_000, n * m));
        let mut rng = Rng::new(12, 0);
        // Heavy-tailed in t: average many chunks.
        let chunks = 40;
        let mut total = 0.0;
        for _ in 0..chunks {
            total += match domain {
                Domain::Time => dsm_loss_value_time(&zero, data.view(), &sched, 1000, &mut rng),
                Domain::Frequency => dsm_loss_value_freq(&zero, data.view(), &sched, 1000, &mut rng),
            }
            .unwrap();
        }
        total / chunks as f64
    }

    #[test]
    fn zero_model_time_loss_matches_expectation() {
        let expected = 4.0 * mean_inverse_variance(&VpSchedule::default(), 1e-3);
        let mc = zero_model_loss(Domain::Time, 4, 1);
        assert!((mc / expected - 1.0).abs() <= 0.02, "mc {mc} expected {expected}");
    }

    #[test]
    fn zero_model_freq_loss_matches_expectation() {
        // N = 4, M = 2: Lambda^2 = (1, 1/2, 1, 1/2).
        let expected = 3.0 * 2.0 * mean_inverse_variance(&VpSchedule::default(), 1e-3);
        let mc = zero_model_loss(Domain::Frequency, 4, 2);
        assert!((mc / expected - 1.0).abs() <= 0.02, "mc {mc} expected {expected}");
    }

    fn check_gradient(domain: Domain) {
        let mut m = model(domain, 4, 2);
        let data = Rng::new(3, 0).normal_matrix(6, 8);
        let sched = VpSchedule::default();
        let eval = |m: &MlpScore| match domain {
            Domain::Time => dsm_loss_time(m, data.view(), &sched, 1000, &mut Rng::new(9, 0)),
            Domain::Frequency => dsm_loss_freq(m, data.view(), &sched, 1000, &mut Rng::new(9, 0)),
        }
        .unwrap();
        let (_, grad) = eval(&m);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..m.n_params() {
            let orig = m.params()[i];
            m.params_mut()[i] = orig + h;
            let up = eval(&m).0;
            m.params_mut()[i] = orig - h;
            let down = eval(&m).0;
            m.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-5, "worst relative error {worst:e}");
    }

    #[test]
    fn time_loss_gradient_matches_finite_differences() {
        check_gradient(Domain::Time);
    }

    #[test]
    fn freq_loss_gradient_matches_finite_differences() {
        check_gradient(Domain::Frequency);
    }
}
