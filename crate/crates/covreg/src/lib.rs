//! Covariance regression: modeling a conditional covariance matrix as a
//! quadratic function of explanatory variables.
//!
//! The covariance of a multivariate response `y` given a regressor `x` is
//! modeled as a baseline plus rank-r quadratic term,
//! `Sigma_x = Psi + sum_k B_k x xᵀ B_kᵀ`, with an optionally distinct
//! linear mean design. The crate provides maximum-likelihood fitting via
//! EM ([`em`]), Wald and likelihood-ratio inference through the expected
//! information matrix ([`inference`]), Bayesian posterior sampling via a
//! Gibbs sampler ([`gibbs`]), and a reproducible simulation-study harness
//! ([`sim`]).
//!
//! All numeric code is generic over the scalar type through [`Scalar`];
//! concrete `f64` aliases are exported below.

pub mod em;
pub mod error;
pub mod gibbs;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use scalar::{derive_seed, RandScalar, Scalar};

pub use linalg::Mat;
pub use model::{Dataset, FitResult, GammaPosterior, Params, ScoreResidual};

/// `f64` working aliases; the generic types accept any [`Scalar`].
pub type Mat64 = linalg::Mat<f64>;
pub type Dataset64 = model::Dataset<f64>;
pub type Params64 = model::Params<f64>;
pub type FitResult64 = model::FitResult<f64>;
pub type EmConfig64 = em::EmConfig<f64>;
pub type Prior64 = gibbs::Prior<f64>;
pub type PosteriorDraws64 = gibbs::PosteriorDraws<f64>;
pub type InformationReport64 = inference::InformationReport<f64>;
pub type LrTestResult64 = inference::LrTestResult<f64>;
pub type SimScenario64 = sim::SimScenario<f64>;
pub type StudyReport64 = sim::StudyReport<f64>;

/// `f32` aliases for the core model types.
pub type Mat32 = linalg::Mat<f32>;
pub type Dataset32 = model::Dataset<f32>;
pub type Params32 = model::Params<f32>;
