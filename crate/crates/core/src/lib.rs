//! Bayesian estimation with robust latent Student-t models.
//!
//! * [`metric`]: paired differences described by a t distribution.
//! * [`ordinal`]: multi-item, multi-group cumulative ordinal model for
//!   Likert responses, with anchored thresholds and empty-level handling.
//! * [`mcmc`]: the sampler both models run on, plus R-hat and ESS.
//! * [`inference`]: HDI, central tendencies, effect sizes and ROPE decisions.
//! * [`oracle`]: brute-force grid posteriors for validating the sampler.

pub mod inference;
pub mod mcmc;
pub mod metric;
pub mod oracle;
pub mod ordinal;
pub mod statfn;

pub use mcmc::{ChainConfig, LogDensity, ParamSpec, PosteriorChains};
pub use statfn::{Prior, TDistParams};
