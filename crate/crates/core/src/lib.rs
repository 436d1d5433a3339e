//! Local level dynamic partition model.
//!
//! A state space model whose latent state at each time is a partition of `n`
//! units. The partition either persists from the previous time or is redrawn
//! from a CRP / two-parameter CRP base law, governed by Bernoulli changepoint
//! indicators. Observations are Gaussian around cluster-specific means.
//!
//! Modules follow the pipeline: [`partition`] laws and metrics, the
//! [`psm`] prior, the conjugate [`model`], the Gibbs [`sampler`], the
//! posterior [`decide`] layer, and the [`synth`] data generators.

pub mod decide;
pub mod error;
pub mod model;
pub mod num;
pub mod partition;
pub mod psm;
pub mod rng;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
pub use model::DataMatrix;
pub use num::Real;
pub use partition::Partition;

pub type GibbsParamsF64 = partition::GibbsParams<f64>;
pub type GibbsParamsF32 = partition::GibbsParams<f32>;
pub type ObsHyperF64 = model::ObsHyper<f64>;
pub type ObsHyperF32 = model::ObsHyper<f32>;
