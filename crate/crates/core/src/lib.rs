//! Compare marginal likelihoods of latent-variable models at two parameter
//! values without ever computing the marginals.
//!
//! For each parameter value, the truncated ratio `min(1, L(θ', w) / L(θ, w))`
//! is averaged over the posterior `P_θ(w | y)`. The side with the larger
//! average belongs to the parameter with the *smaller* marginal likelihood,
//! and the ratio of the two averages estimates `L(θ2) / L(θ1)`.
//!
//! Modules:
//! - [`model`]: the model trait and its domain types
//! - [`models`]: table, Gaussian mixture (with EM) and random-effects models
//! - [`oracle`]: exact enumeration and quadrature values for testing
//! - [`sampler`]: exact and random-walk Metropolis–Hastings posterior draws
//! - [`estimator`]: Monte Carlo integrals and the sequential comparison
//! - [`ascent`]: proposal-based maximum-likelihood ascent
//! - [`config`] / [`run`]: the command-line workflows

#![forbid(unsafe_code)]

pub mod ascent;
pub mod config;
pub mod error;
pub mod estimator;
pub mod math;
pub mod model;
pub mod models;
pub mod oracle;
pub mod run;
pub mod sampler;

pub use error::{Error, Result};
pub use estimator::{
    compare_likelihoods, estimate_truncated_integral, likelihood_ratio_from_integrals,
    truncated_log_ratio, ComparisonResult, Decision, TruncatedRatioEstimate,
};
pub use model::{LatentModel, LatentPoint, LatentSpace, LogDensity, ParameterVector};
pub use oracle::{exact_integrals, quadrature_integrals, verify_theorem, ExactIntegrals};
