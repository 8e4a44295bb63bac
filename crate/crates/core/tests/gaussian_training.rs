//! Trained models of standard normal data regenerate its covariance.

use freqdiff::config::{validate_config, RunConfig};
use freqdiff::diffusion::{reverse_sample, VpSchedule};
use freqdiff::scoring::train;
use freqdiff::{Domain, Rng, TimeSeries};

const N: usize = 8;

fn standard_normal(count: usize, seed: u64) -> Vec<TimeSeries> {
    let mut rng = Rng::new(seed, 1);
    (0..count)
        .map(|_| TimeSeries::new(rng.normal_matrix(N, 1)).unwrap())
        .collect()
}

fn covariance(samples: &[TimeSeries]) -> Vec<Vec<f64>> {
    let k = samples.len() as f64;
    let mean: Vec<f64> = (0..N)
        .map(|i| samples.iter().map(|s| s.values()[[i, 0]]).sum::<f64>() / k)
        .collect();
    (0..N)
        .map(|i| {
            (0..N)
                .map(|j| {
                    samples
                        .iter()
                        .map(|s| (s.values()[[i, 0]] - mean[i]) * (s.values()[[j, 0]] - mean[j]))
                        .sum::<f64>()
                        / (k - 1.0)
                })
                .collect()
        })
        .collect()
}

fn check_domain(domain: Domain) {
    let mut cfg = RunConfig::default();
    cfg.seed = 11;
    cfg.data.n = N;
    cfg.training.epochs = 40;
    cfg.training.warmup_epochs = 4;
    cfg.training.batch_size = 32;
    cfg.model.hidden_sizes = vec![64, 64];
    cfg.model.time_features = 16;
    cfg.model.embed_dim = 16;
    let cfg = validate_config(cfg).unwrap();
    let (model, _) = train(&standard_normal(2000, 1), &standard_normal(200, 2), domain, &cfg).unwrap();
    let sched = VpSchedule::from_config(&cfg).unwrap();
    let generated = reverse_sample(&model, &sched, 10_000, 1000, &Rng::new(5, 0)).unwrap();
    let cov = covariance(&generated);
    for i in 0..N {
        for j in 0..N {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!(
                (cov[i][j] - target).abs() <= 0.1,
                "{domain}: cov[{i}][{j}] = {}",
                cov[i][j]
            );
        }
    }
}

#[test]
fn time_model_regenerates_identity_covariance() {
    check_domain(Domain::Time);
}

#[test]
fn frequency_model_regenerates_identity_covariance() {
    check_domain(Domain::Frequency);
}
