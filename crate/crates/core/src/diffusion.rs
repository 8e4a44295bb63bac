//! VP-SDE schedule, closed-form perturbation kernels, and Euler–Maruyama
//! integrators in both domains.
//!
//! Time domain: `dx = -1/2 beta(t) x dt + sqrt(beta(t)) dw`.
//!
//! Frequency domain, integrated in chart coordinates `z = phi(U x)`:
//! `dz = -1/2 beta(t) z dt + sqrt(beta(t)) Lambda dw`, and in reverse time
//! `dz = [-1/2 beta z - beta Lambda^2 s(z, t)] dt + sqrt(beta) Lambda dw`.
//!
//! The diffusion horizon is normalized to `T = 1`.

use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scoring::ScoreModel;
use crate::series::{Domain, PhiVector, TimeSeries};
use crate::spectral::{dft, from_phi, lambda_scaling, phi, phi_inv, LambdaScaling};
use crate::stochastic::Rng;

/// Diffusion horizon.
pub const T_END: f64 = 1.0;

/// Linear-beta variance-preserving schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
}

/// The schedule evaluated at one diffusion time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleValues {
    /// `beta(t)`, the squared diffusion coefficient.
    pub beta: f64,
    /// `B(t) = int_0^t beta`.
    pub integral: f64,
    /// Mean coefficient `exp(-B/2)`.
    pub alpha: f64,
    /// Noise scale `sqrt(1 - exp(-B))`.
    pub sigma: f64,
}

impl Default for VpSchedule {
    fn default() -> Self {
        Self {
            beta_min: 0.1,
            beta_max: 20.0,
        }
    }
}

impl VpSchedule {
    pub fn new(beta_min: f64, beta_max: f64) -> Result<Self> {
        if !(beta_min > 0.0 && beta_max > beta_min && beta_max.is_finite()) {
            return Err(Error::Config("β_min < β_max violated".into()));
        }
        Ok(Self { beta_min, beta_max })
    }

    pub fn from_config(cfg: &crate::config::RunConfig) -> Result<Self> {
        Self::new(cfg.diffusion.beta_min, cfg.diffusion.beta_max)
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + t * (self.beta_max - self.beta_min)
    }

    pub fn integral(&self, t: f64) -> f64 {
        self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t
    }

    pub fn alpha(&self, t: f64) -> f64 {
        (-0.5 * self.integral(t)).exp()
    }

    pub fn sigma(&self, t: f64) -> f64 {
        (-(-self.integral(t)).exp_m1()).sqrt()
    }

    /// Evaluates the schedule, rejecting times outside `[0, T]`.
    pub fn eval(&self, t: f64) -> Result<ScheduleValues> {
        if !(0.0..=T_END).contains(&t) {
            return Err(Error::TimeRange { t, range: "[0, 1]" });
        }
        Ok(ScheduleValues {
            beta: self.beta(t),
            integral: self.integral(t),
            alpha: self.alpha(t),
            sigma: self.sigma(t),
        })
    }
}

pub(crate) fn check_positive_time(t: f64) -> Result<()> {
    if t > 0.0 && t <= T_END {
        Ok(())
    } else {
        Err(Error::TimeRange { t, range: "(0, 1]" })
    }
}

/// Draws `x_t = alpha(t) x0 + sigma(t) eps` and returns it with `eps`.
pub fn perturb_time(
    sched: &VpSchedule,
    x0: &TimeSeries,
    t: f64,
    rng: &mut Rng,
) -> Result<(TimeSeries, Array2<f64>)> {
    check_positive_time(t)?;
    let (n, m) = x0.shape();
    let eps = rng.normal_matrix(n, m);
    let xt = x0.values() * sched.alpha(t) + &eps * sched.sigma(t);
    Ok((TimeSeries::new(xt)?, eps))
}

/// Draws `z_t = alpha(t) z0 + sigma(t) Lambda eps` in chart coordinates and
/// returns it with `eps`.
pub fn perturb_freq(
    sched: &VpSchedule,
    z0: &PhiVector,
    t: f64,
    rng: &mut Rng,
) -> Result<(PhiVector, Array2<f64>)> {
    check_positive_time(t)?;
    let (n, m) = z0.shape();
    let eps = rng.normal_matrix(n, m);
    let mut noise = eps.clone();
    lambda_scaling(n).apply(&mut noise, 1);
    let zt = z0.values() * sched.alpha(t) + noise * sched.sigma(t);
    Ok((PhiVector::new(zt)?, eps))
}

/// Row-wise diagonal noise shaping for flattened `N x M` states: the factor
/// for flat index `i` is `lambda[i / M]`.
fn flat_lambda(lambda: &LambdaScaling, m: usize) -> Vec<f64> {
    lambda
        .diag()
        .iter()
        .flat_map(|&d| std::iter::repeat_n(d, m))
        .collect()
}

/// Forward Euler–Maruyama from `t = 0` to `t_end` for a batch of flattened
/// states (one row per path), with optional per-coordinate noise shaping.
pub fn forward_euler_maruyama(
    sched: &VpSchedule,
    x0: ArrayView2<f64>,
    noise_shape: Option<&[f64]>,
    t_end: f64,
    steps: usize,
    rng: &mut Rng,
) -> Result<Array2<f64>> {
    check_positive_time(t_end)?;
    if steps == 0 {
        return Err(Error::Value("steps ≥ 1 required".into()));
    }
    let dt = t_end / steps as f64;
    let mut x = x0.to_owned();
    let d = x.ncols();
    let mut z = vec![0.0; d];
    for k in 0..steps {
        let beta = sched.beta(k as f64 * dt);
        let decay = 1.0 - 0.5 * beta * dt;
        let diffusion = (beta * dt).sqrt();
        for mut row in x.axis_iter_mut(Axis(0)) {
            rng.fill_normal(&mut z);
            for (j, v) in row.iter_mut().enumerate() {
                let shape = noise_shape.map_or(1.0, |s| s[j]);
                *v = *v * decay + diffusion * shape * z[j];
            }
        }
    }
    Ok(x)
}

fn check_score_shape(score: &dyn ScoreModel, domain: Domain) -> Result<(usize, usize)> {
    if score.domain() != domain {
        return Err(Error::Value(format!(
            "score model works in the {} domain, sampler needs {domain}",
            score.domain()
        )));
    }
    Ok(score.shape())
}

/// Reverse Euler–Maruyama on flattened states. `shape` scales the injected
/// noise per coordinate (Lambda in chart coordinates, ones in the time
/// domain). Frequency models already emit `Lambda^2` times the chart score,
/// so the drift uses the model output as is.
fn reverse_integrate(
    score: &dyn ScoreModel,
    sched: &VpSchedule,
    n_paths: usize,
    steps: usize,
    shape: &[f64],
    rng: &Rng,
) -> Result<Array2<f64>> {
    if steps == 0 {
        return Err(Error::Value("steps ≥ 1 required".into()));
    }
    let d = shape.len();
    let mut streams: Vec<Rng> = (0..n_paths).map(|i| rng.substream(i as u64)).collect();
    let mut x = Array2::<f64>::zeros((n_paths, d));
    for (mut row, stream) in x.axis_iter_mut(Axis(0)).zip(streams.iter_mut()) {
        for (v, s) in row.iter_mut().zip(shape) {
            *v = s * stream.normal();
        }
    }
    if n_paths == 0 {
        return Ok(x);
    }
    let dt = T_END / steps as f64;
    let mut z = vec![0.0; d];
    let mut times = vec![0.0; n_paths];
    for k in 0..steps {
        let t = T_END - k as f64 * dt;
        times.fill(t);
        let s = score.score_batch(x.view(), &times)?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "score output",
                location: format!("reverse step {k} (t = {t})"),
            });
        }
        let beta = sched.beta(t);
        let last = k + 1 == steps;
        let diffusion = (beta * dt).sqrt();
        for ((mut row, srow), stream) in x
            .axis_iter_mut(Axis(0))
            .zip(s.axis_iter(Axis(0)))
            .zip(streams.iter_mut())
        {
            if !last {
                stream.fill_normal(&mut z);
            }
            for j in 0..d {
                // Reverse-time drift f - g^2 s, stepped backwards by dt.
                let drift = -0.5 * beta * row[j] - beta * srow[j];
                let mut next = row[j] - drift * dt;
                if !last {
                    next += diffusion * shape[j] * z[j];
                }
                row[j] = next;
            }
        }
    }
    Ok(x)
}

/// Generates `n` series with a time-domain score model.
///
/// The final step omits the injected noise, returning the denoised mean.
pub fn reverse_sample_time(
    score: &dyn ScoreModel,
    sched: &VpSchedule,
    n: usize,
    steps: usize,
    rng: &Rng,
) -> Result<Vec<TimeSeries>> {
    let (rows, cols) = check_score_shape(score, Domain::Time)?;
    let ones = vec![1.0; rows * cols];
    let x = reverse_integrate(score, sched, n, steps, &ones, rng)?;
    x.axis_iter(Axis(0))
        .map(|row| TimeSeries::from_flat(rows, cols, row.to_vec()))
        .collect()
}

/// Output of the frequency sampler: the series and their chart coordinates
/// at the end of the reverse process.
#[derive(Debug, Clone)]
pub struct FrequencySamples {
    pub series: Vec<TimeSeries>,
    pub chart: Vec<PhiVector>,
}

/// Generates `n` series with a frequency-domain score model working on chart
/// coordinates, mapping the end states back with `idft(phi_inv(.))`. The
/// model must emit `Lambda^2` times the chart score, as trained models do;
/// see [`GaussianOracle::lambda_adjusted`](crate::scoring::GaussianOracle::lambda_adjusted).
pub fn reverse_sample_freq_with_chart(
    score: &dyn ScoreModel,
    sched: &VpSchedule,
    n: usize,
    steps: usize,
    rng: &Rng,
) -> Result<FrequencySamples> {
    let (rows, cols) = check_score_shape(score, Domain::Frequency)?;
    let lambda = lambda_scaling(rows);
    let shape = flat_lambda(&lambda, cols);
    let z = reverse_integrate(score, sched, n, steps, &shape, rng)?;
    let mut series = Vec::with_capacity(n);
    let mut chart = Vec::with_capacity(n);
    for row in z.axis_iter(Axis(0)) {
        let pv = PhiVector::new(
            Array2::from_shape_vec((rows, cols), row.to_vec()).expect("flat chart row"),
        )?;
        series.push(from_phi(&pv)?);
        chart.push(pv);
    }
    Ok(FrequencySamples { series, chart })
}

pub fn reverse_sample_freq(
    score: &dyn ScoreModel,
    sched: &VpSchedule,
    n: usize,
    steps: usize,
    rng: &Rng,
) -> Result<Vec<TimeSeries>> {
    Ok(reverse_sample_freq_with_chart(score, sched, n, steps, rng)?.series)
}

/// Dispatches to the sampler matching the model's domain.
pub fn reverse_sample(
    score: &dyn ScoreModel,
    sched: &VpSchedule,
    n: usize,
    steps: usize,
    rng: &Rng,
) -> Result<Vec<TimeSeries>> {
    match score.domain() {
        Domain::Time => reverse_sample_time(score, sched, n, steps, rng),
        Domain::Frequency => reverse_sample_freq(score, sched, n, steps, rng),
    }
}

/// Integrates the forward SDE in both domains on one shared Brownian path
/// and returns the largest discrepancy between `dft(x_k)` and
/// `phi_inv(z_k)` over the retained checkpoints.
///
/// The chart path is driven by `w' = Lambda^{-1} phi(U dW)`, which is again
/// a standard Brownian increment.
pub fn forward_commutation_check(
    sched: &VpSchedule,
    x0: &TimeSeries,
    steps: usize,
    seed: u64,
) -> Result<f64> {
    if steps < 100 {
        return Err(Error::Value(format!("steps ≥ 100 required, got {steps}")));
    }
    let (n, m) = x0.shape();
    let lambda = lambda_scaling(n);
    let mut rng = Rng::new(seed, 0);
    let dt = T_END / steps as f64;
    let checkpoint_every = (steps / 100).max(1);

    let mut x = x0.values().clone();
    let mut z = phi(&dft(x0)).into_inner();
    let mut worst = 0.0f64;
    for k in 0..steps {
        let beta = sched.beta(k as f64 * dt);
        let dw = rng.normal_matrix(n, m).mapv_into(|v| v * dt.sqrt());
        let mut dw_chart = phi(&dft(&TimeSeries::new(dw.clone())?)).into_inner();
        lambda.apply(&mut dw_chart, -1);
        let mut noise = dw_chart;
        lambda.apply(&mut noise, 1);

        x = &x * (1.0 - 0.5 * beta * dt) + &dw * beta.sqrt();
        z = &z * (1.0 - 0.5 * beta * dt) + &noise * beta.sqrt();

        if (k + 1) % checkpoint_every == 0 || k + 1 == steps {
            let lhs = dft(&TimeSeries::new(x.clone())?);
            let rhs = phi_inv(&PhiVector::new(z.clone())?);
            let dev = lhs
                .values()
                .iter()
                .zip(rhs.values().iter())
                .map(|(a, b): (&Complex64, &Complex64)| (a - b).norm())
                .fold(0.0, f64::max);
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}
