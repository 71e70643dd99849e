//! Spectral analysis of high-dimensional sample covariance matrices under
//! scale-mixture populations `x = w T z`.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod lsd;
pub mod clt;
pub mod model;
pub mod sampler;
pub mod series;
pub mod special;
pub mod sphericity;

pub use error::{Error, Result};
pub use model::{BaseDistribution, LsdModel, MixingDistribution, PopulationSpectralDistribution};
