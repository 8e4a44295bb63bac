//! Fully connected score network with a random-Fourier time embedding.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{check_batch, ScoreModel};
use crate::config::RunConfig;
use crate::diffusion::VpSchedule;
use crate::error::{Error, Result};
use crate::series::Domain;
use crate::stochastic::Rng;

const FOURIER_STREAM: u64 = 0x7466;
const INIT_STREAM: u64 = 0x696e;

/// Everything needed to rebuild a network apart from its trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub n: usize,
    pub m: usize,
    pub domain: Domain,
    pub hidden_sizes: Vec<usize>,
    pub time_features: usize,
    pub time_scale: f64,
    pub embed_dim: usize,
    pub scale_by_sigma: bool,
    /// Older checkpoints predate the skip and load without it.
    #[serde(default)]
    pub gaussian_skip: bool,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Seeds the Fourier frequencies and the initial weights.
    pub seed: u64,
}

impl MlpArchitecture {
    pub fn from_config(cfg: &RunConfig, domain: Domain) -> Self {
        Self {
            n: cfg.data.n,
            m: cfg.data.m,
            domain,
            hidden_sizes: cfg.model.hidden_sizes.clone(),
            time_features: cfg.model.time_features,
            time_scale: cfg.model.time_scale,
            embed_dim: cfg.model.embed_dim,
            scale_by_sigma: cfg.model.scale_by_sigma,
            gaussian_skip: cfg.model.gaussian_skip,
            beta_min: cfg.diffusion.beta_min,
            beta_max: cfg.diffusion.beta_max,
            seed: cfg.seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.n * self.m
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Shape(format!("empty input shape {}x{}", self.n, self.m)));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden_sizes must be nonempty and positive".into()));
        }
        if self.time_features == 0 || self.embed_dim == 0 {
            return Err(Error::Config("time embedding sizes must be positive".into()));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(Error::Config("time_scale > 0 violated".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

impl Layer {
    fn len(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }
}

/// Intermediate values kept for the backward pass.
pub(crate) struct Cache {
    features: Array2<f64>,
    embed_pre: Array2<f64>,
    /// Input of each body layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden body layer.
    pre: Vec<Array2<f64>>,
    out_scale: Vec<f64>,
}

/// MLP score model: `[x_flat, SiLU(W_e ff(t) + b_e)] -> SiLU hidden layers
/// -> linear output`, optionally divided by `sigma(t)`.
#[derive(Debug, Clone)]
pub struct MlpScore {
    arch: MlpArchitecture,
    schedule: VpSchedule,
    frequencies: Vec<f64>,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

impl MlpScore {
    /// Fresh network: LeCun-normal weights, zero biases and a zero output
    /// layer, so the initial score is identically zero.
    pub fn new(arch: MlpArchitecture) -> Result<Self> {
        arch.validate()?;
        let schedule = VpSchedule::new(arch.beta_min, arch.beta_max)?;
        let mut frng = Rng::new(arch.seed, FOURIER_STREAM);
        let frequencies = (0..arch.time_features)
            .map(|_| arch.time_scale * frng.normal())
            .collect();

        let d = arch.input_dim();
        let mut sizes = vec![(2 * arch.time_features, arch.embed_dim)];
        let mut prev = d + arch.embed_dim;
        for &h in &arch.hidden_sizes {
            sizes.push((prev, h));
            prev = h;
        }
        sizes.push((prev, d));
        let mut layers = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for (fan_in, fan_out) in sizes {
            let layer = Layer {
                fan_in,
                fan_out,
                w: offset,
                b: offset + fan_in * fan_out,
            };
            offset += layer.len();
            layers.push(layer);
        }

        let mut params = vec![0.0; offset];
        let mut irng = Rng::new(arch.seed, INIT_STREAM);
        let last = layers.len() - 1;
        for layer in &layers[..last] {
            let std = (1.0 / layer.fan_in as f64).sqrt();
            for p in &mut params[layer.w..layer.b] {
                *p = std * irng.normal();
            }
        }
        Ok(Self {
            arch,
            schedule,
            frequencies,
            layers,
            params,
        })
    }

    /// Rebuilds a network from its descriptor and parameter block.
    pub fn from_parts(arch: MlpArchitecture, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::new(arch)?;
        model.set_params(params)?;
        Ok(model)
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn schedule(&self) -> &VpSchedule {
        &self.schedule
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "network has {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                what: "parameter",
                location: format!("index {i}"),
            });
        }
        self.params = params;
        Ok(())
    }

    fn weights(&self, layer: &Layer) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((layer.fan_in, layer.fan_out), &self.params[layer.w..layer.b])
            .expect("layer layout")
    }

    fn bias(&self, layer: &Layer) -> &[f64] {
        &self.params[layer.b..layer.b + layer.fan_out]
    }

    fn affine(&self, layer: &Layer, input: &Array2<f64>) -> Array2<f64> {
        let mut z = input.dot(&self.weights(layer));
        let b = Array1::from(self.bias(layer).to_vec());
        z += &b;
        z
    }

    /// Random Fourier features `[sin(2 pi w t), cos(2 pi w t)]`.
    pub fn time_features(&self, t: &[f64]) -> Array2<f64> {
        let f = self.frequencies.len();
        Array2::from_shape_fn((t.len(), 2 * f), |(i, j)| {
            let angle = 2.0 * PI * self.frequencies[j % f] * t[i];
            if j < f {
                angle.sin()
            } else {
                angle.cos()
            }
        })
    }

    pub(crate) fn forward(&self, inputs: ArrayView2<f64>, t: &[f64]) -> Result<(Array2<f64>, Cache)> {
        check_batch(self.arch.input_dim(), &inputs, t)?;
        let features = self.time_features(t);
        let embed_pre = self.affine(&self.layers[0], &features);
        let embed = embed_pre.mapv(silu);
        let mut h = concatenate(Axis(1), &[inputs, embed.view()]).expect("batch rows agree");
        let body = &self.layers[1..];
        let mut layer_inputs = Vec::with_capacity(body.len());
        let mut pre = Vec::with_capacity(body.len() - 1);
        for (i, layer) in body.iter().enumerate() {
            let z = self.affine(layer, &h);
            layer_inputs.push(std::mem::replace(&mut h, Array2::zeros((0, 0))));
            if i + 1 < body.len() {
                h = z.mapv(silu);
                pre.push(z);
            } else {
                h = z;
            }
        }
        let out_scale: Vec<f64> = if self.arch.scale_by_sigma {
            t.iter().map(|&ti| 1.0 / self.schedule.sigma(ti)).collect()
        } else {
            vec![1.0; t.len()]
        };
        for (mut row, &c) in h.axis_iter_mut(Axis(0)).zip(&out_scale) {
            row.mapv_inplace(|v| v * c);
        }
        if self.arch.gaussian_skip {
            // White data has chart covariance Lambda^2, so the emitted form
            // of its score is -x in both domains.
            h -= &inputs;
        }
        Ok((
            h,
            Cache {
                features,
                embed_pre,
                inputs: layer_inputs,
                pre,
                out_scale,
            },
        ))
    }

    /// Parameter gradient of `sum(grad_out * output)`.
    pub(crate) fn backward(&self, cache: &Cache, grad_out: &Array2<f64>) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        let mut g = grad_out.clone();
        for (mut row, &c) in g.axis_iter_mut(Axis(0)).zip(&cache.out_scale) {
            row.mapv_inplace(|v| v * c);
        }
        let body = &self.layers[1..];
        let d = self.arch.input_dim();
        for i in (0..body.len()).rev() {
            let layer = &body[i];
            accumulate(&mut grads, layer, &cache.inputs[i], &g);
            let gh = g.dot(&self.weights(layer).t());
            if i > 0 {
                g = gh * &cache.pre[i - 1].mapv(silu_grad);
            } else {
                let ge = gh.slice(s![.., d..]).to_owned() * &cache.embed_pre.mapv(silu_grad);
                accumulate(&mut grads, &self.layers[0], &cache.features, &ge);
            }
        }
        grads
    }
}

fn accumulate(grads: &mut [f64], layer: &Layer, input: &Array2<f64>, g: &Array2<f64>) {
    let dw = input.t().dot(g);
    for (dst, v) in grads[layer.w..layer.b].iter_mut().zip(dw.iter()) {
        *dst += v;
    }
    for (dst, v) in grads[layer.b..layer.b + layer.fan_out]
        .iter_mut()
        .zip(g.sum_axis(Axis(0)).iter())
    {
        *dst += v;
    }
}

impl ScoreModel for MlpScore {
    fn domain(&self) -> Domain {
        self.arch.domain
    }

    fn shape(&self) -> (usize, usize) {
        (self.arch.n, self.arch.m)
    }

    fn score_batch(&self, inputs: ArrayView2<f64>, t: &[f64]) -> Result<Array2<f64>> {
        Ok(self.forward(inputs, t)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch(scale_by_sigma: bool) -> MlpArchitecture {
        MlpArchitecture {
            n: 3,
            m: 2,
            domain: Domain::Time,
            hidden_sizes: vec![7, 5],
            time_features: 4,
            time_scale: 2.0,
            embed_dim: 3,
            scale_by_sigma,
            gaussian_skip: false,
            beta_min: 0.1,
            beta_max: 20.0,
            seed: 11,
        }
    }

    fn perturbed(arch: MlpArchitecture) -> MlpScore {
        let mut model = MlpScore::new(arch).unwrap();
        let mut rng = Rng::new(5, 0);
        for p in model.params_mut() {
            *p += 0.3 * rng.normal();
        }
        model
    }

    #[test]
    fn fresh_network_outputs_zero() {
        let model = MlpScore::new(small_arch(true)).unwrap();
        let x = Rng::new(1, 0).normal_matrix(4, 6);
        let out = model.score_batch(x.view(), &[0.1, 0.4, 0.7, 1.0]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fresh_network_with_skip_is_the_white_noise_score() {
        let arch = MlpArchitecture {
            gaussian_skip: true,
            ..small_arch(true)
        };
        let model = MlpScore::new(arch).unwrap();
        let x = Rng::new(1, 0).normal_matrix(4, 6);
        let out = model.score_batch(x.view(), &[0.1, 0.4, 0.7, 1.0]).unwrap();
        assert_eq!(out, -&x);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let model = perturbed(small_arch(true));
        let x = Rng::new(2, 0).normal_matrix(3, 6);
        let t = [0.2, 0.5, 0.9];
        let a = model.score_batch(x.view(), &t).unwrap();
        let b = model.score_batch(x.view(), &t).unwrap();
        assert_eq!(a, b);
        let rebuilt = MlpScore::from_parts(small_arch(true), model.params().to_vec()).unwrap();
        assert_eq!(rebuilt.score_batch(x.view(), &t).unwrap(), a);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let model = MlpScore::new(small_arch(false)).unwrap();
        let x = Array2::zeros((2, 5));
        assert!(matches!(model.score_batch(x.view(), &[0.5, 0.5]), Err(Error::Shape(_))));
        let y = Array2::zeros((2, 3));
        assert!(matches!(model.score(&y, 0.5), Err(Error::Shape(_))));
        let z = Array2::zeros((1, 6));
        assert!(matches!(model.score_batch(z.view(), &[0.0]), Err(Error::TimeRange { .. })));
    }

    #[test]
    fn parameter_count_matches_layout() {
        let model = MlpScore::new(small_arch(false)).unwrap();
        let expected = (8 * 3 + 3) + (9 * 7 + 7) + (7 * 5 + 5) + (5 * 6 + 6);
        assert_eq!(model.n_params(), expected);
    }

    fn check_gradient(arch: MlpArchitecture) {
        let mut model = perturbed(arch);
        let mut rng = Rng::new(3, 0);
        let x = rng.normal_matrix(4, 6);
        let t = [0.05, 0.3, 0.6, 1.0];
        // Random weights on the output make the check sensitive to every entry.
        let w = rng.normal_matrix(4, 6);
        let (_, cache) = model.forward(x.view(), &t).unwrap();
        let grads = model.backward(&cache, &w);
        let objective = |m: &MlpScore| (m.score_batch(x.view(), &t).unwrap() * &w).sum();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..model.n_params() {
            let orig = model.params[i];
            model.params[i] = orig + h;
            let up = objective(&model);
            model.params[i] = orig - h;
            let down = objective(&model);
            model.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grads[i]).abs() / (fd.abs().max(grads[i].abs()).max(1e-3));
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-5, "worst relative gradient error {worst:e}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        check_gradient(small_arch(false));
    }

    #[test]
    fn gradient_matches_finite_differences_with_sigma_scaling() {
        check_gradient(small_arch(true));
    }

    #[test]
    fn gradient_matches_finite_differences_with_skip() {
        check_gradient(MlpArchitecture {
            gaussian_skip: true,
            ..small_arch(true)
        });
    }
}
