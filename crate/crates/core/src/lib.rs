//! Score-based diffusion of multivariate time series in the time domain and
//! in the frequency domain.
//!
//! The frequency-domain process is the image of the time-domain VP-SDE under
//! the unitary DFT. Its Brownian motion becomes a *mirrored* Brownian motion,
//! which this crate integrates in the real chart coordinates of the spectrum
//! with a diagonal noise scaling.

pub mod config;
pub mod datio;
pub mod diffusion;
pub mod error;
pub mod labkit;
pub mod metrics;
pub mod scoring;
pub mod series;
pub mod spectral;
pub mod stochastic;

pub use config::{validate_config, RunConfig, ValidatedConfig};
pub use error::{Error, Result};
pub use series::{Domain, PhiVector, SpectralSeries, TimeSeries};
pub use stochastic::Rng;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
