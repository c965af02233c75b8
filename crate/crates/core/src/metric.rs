//! Robust model for paired metric data.
//!
//! Each participant contributes the difference between their two condition
//! measurements; the differences are i.i.d. t(μ, τ, ν) with a normal prior
//! on μ, a uniform prior on τ and an exponential prior on ν.

use rand::Rng;
use rand_distr::{Distribution, StudentT as StudentTSampler};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mcmc::{LogDensity, ParamSpec};
use crate::statfn::{NuPrior, Prior, StatError, StudentT, TDistParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("condition columns differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired observations, got {0}")]
    TooFew(usize),
    #[error("non-finite value for participant {0}")]
    NonFinite(String),
    #[error("differences have zero standard deviation; inspect the dataset before fitting")]
    Degenerate,
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// a − b element-wise.
pub fn compute_differences(values_a: &[f64], values_b: &[f64]) -> Result<Vec<f64>, MetricError> {
    if values_a.len() != values_b.len() {
        return Err(MetricError::LengthMismatch(values_a.len(), values_b.len()));
    }
    if values_a.len() < 2 {
        return Err(MetricError::TooFew(values_a.len()));
    }
    Ok(values_a.iter().zip(values_b).map(|(a, b)| a - b).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedMetricDataset {
    pub participant_ids: Vec<String>,
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
    pub differences: Vec<f64>,
}

impl PairedMetricDataset {
    pub fn new(
        participant_ids: Vec<String>,
        values_a: Vec<f64>,
        values_b: Vec<f64>,
    ) -> Result<Self, MetricError> {
        let differences = compute_differences(&values_a, &values_b)?;
        if participant_ids.len() != values_a.len() {
            return Err(MetricError::LengthMismatch(participant_ids.len(), values_a.len()));
        }
        for (i, id) in participant_ids.iter().enumerate() {
            if !(values_a[i].is_finite() && values_b[i].is_finite()) {
                return Err(MetricError::NonFinite(id.clone()));
            }
        }
        Ok(Self {
            participant_ids,
            values_a,
            values_b,
            differences,
        })
    }

    /// Dataset built straight from differences, with condition b at zero.
    pub fn from_differences(differences: Vec<f64>) -> Result<Self, MetricError> {
        let ids = (1..=differences.len()).map(|i| format!("p{i}")).collect();
        let zeros = vec![0.0; differences.len()];
        Self::new(ids, differences, zeros)
    }

    pub fn len(&self) -> usize {
        self.differences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.differences.is_empty()
    }

    /// Drop the listed participants; returns the ids actually removed.
    pub fn exclude(&self, ids: &[String]) -> Result<(Self, Vec<String>), MetricError> {
        let mut keep_ids = Vec::new();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut dropped = Vec::new();
        for (i, id) in self.participant_ids.iter().enumerate() {
            if ids.contains(id) {
                dropped.push(id.clone());
            } else {
                keep_ids.push(id.clone());
                a.push(self.values_a[i]);
                b.push(self.values_b[i]);
            }
        }
        Ok((Self::new(keep_ids, a, b)?, dropped))
    }
}

/// Sample mean and standard deviation (n − 1 denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Multipliers that turn the sample mean x̄ and sd s into broad priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorWidths {
    /// μ ~ normal(x̄, mu_sd_factor · s)
    pub mu_sd_factor: f64,
    /// τ ~ uniform(s / tau_lo_divisor, tau_hi_factor · s)
    pub tau_lo_divisor: f64,
    pub tau_hi_factor: f64,
    pub nu: NuPrior,
}

impl Default for PriorWidths {
    fn default() -> Self {
        Self {
            mu_sd_factor: 100.0,
            tau_lo_divisor: 1000.0,
            tau_hi_factor: 1000.0,
            nu: NuPrior::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPriors {
    pub mu_prior: Prior,
    pub tau_prior: Prior,
    pub nu_prior: NuPrior,
}

impl MetricPriors {
    pub fn validate(&self) -> Result<(), MetricError> {
        self.mu_prior.validate()?;
        self.tau_prior.validate()?;
        self.nu_prior.validate()?;
        if let Prior::Uniform { lo, .. } = self.tau_prior {
            if lo <= 0.0 {
                return Err(StatError::Domain {
                    name: "tau prior lo",
                    value: lo,
                    reason: "must be positive",
                }
                .into());
            }
        }
        Ok(())
    }

    pub fn ln_density(&self, p: &TDistParams) -> f64 {
        self.mu_prior.ln_density(p.mu) + self.tau_prior.ln_density(p.tau) + self.nu_prior.ln_density(p.nu)
    }
}

pub fn default_priors(differences: &[f64]) -> Result<MetricPriors, MetricError> {
    priors_with(differences, &PriorWidths::default())
}

pub fn priors_with(differences: &[f64], widths: &PriorWidths) -> Result<MetricPriors, MetricError> {
    if differences.len() < 2 {
        return Err(MetricError::TooFew(differences.len()));
    }
    let (mean, sd) = mean_sd(differences);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(MetricError::Degenerate);
    }
    let priors = MetricPriors {
        mu_prior: Prior::normal(mean, widths.mu_sd_factor * sd)?,
        tau_prior: Prior::uniform(sd / widths.tau_lo_divisor, widths.tau_hi_factor * sd)?,
        nu_prior: widths.nu,
    };
    priors.validate()?;
    Ok(priors)
}

/// Unnormalized log posterior; `-inf` whenever a prior density is zero.
pub fn log_posterior(params: &TDistParams, data: &PairedMetricDataset, priors: &MetricPriors) -> f64 {
    log_posterior_of(params, &data.differences, priors)
}

fn log_posterior_of(params: &TDistParams, differences: &[f64], priors: &MetricPriors) -> f64 {
    let lp = priors.ln_density(params);
    if !lp.is_finite() {
        return f64::NEG_INFINITY;
    }
    let Ok(t) = StudentT::new(*params) else {
        return f64::NEG_INFINITY;
    };
    lp + differences.iter().map(|&d| t.ln_pdf(d)).sum::<f64>()
}

/// The metric model as a sampler target over `[mu, tau, nu]`.
#[derive(Debug, Clone)]
pub struct MetricModel {
    pub data: PairedMetricDataset,
    pub priors: MetricPriors,
    /// Hold ν at this value instead of sampling it.
    pub fixed_nu: Option<f64>,
}

impl MetricModel {
    pub const PARAM_NAMES: [&'static str; 3] = ["mu", "tau", "nu"];

    pub fn new(data: PairedMetricDataset, priors: MetricPriors) -> Result<Self, MetricError> {
        priors.validate()?;
        if data.len() < 2 {
            return Err(MetricError::TooFew(data.len()));
        }
        Ok(Self {
            data,
            priors,
            fixed_nu: None,
        })
    }

    pub fn with_fixed_nu(mut self, nu: f64) -> Self {
        self.fixed_nu = Some(nu);
        self
    }

    /// Start at the sample moments. ν moves on the log scale.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (mean, sd) = mean_sd(&self.data.differences);
        let sd = if sd > 0.0 { sd } else { 1.0 };
        let n = self.data.len() as f64;
        let (tau_lo, tau_hi) = self.priors.tau_prior.support();
        let nu_lo = self.priors.nu_prior.lower_bound();
        let nu_init = self.priors.nu_prior.mean.max(nu_lo * 2.0);
        let nu = match self.fixed_nu {
            Some(v) => ParamSpec::fixed("nu", v),
            None => ParamSpec::free("nu", nu_init)
                .bounded(nu_lo, f64::INFINITY)
                .log_scale()
                .with_step(0.5),
        };
        vec![
            ParamSpec::free("mu", mean).with_step(sd / n.sqrt()),
            ParamSpec::free("tau", sd.clamp(tau_lo * 1.001, tau_hi * 0.999))
                .bounded(tau_lo, tau_hi)
                .with_step(sd / (2.0 * n).sqrt()),
            nu,
        ]
    }
}

impl LogDensity for MetricModel {
    fn log_density(&self, x: &[f64]) -> f64 {
        let p = TDistParams {
            mu: x[0],
            tau: x[1],
            nu: x[2],
        };
        log_posterior_of(&p, &self.data.differences, &self.priors)
    }

    fn explain(&self, x: &[f64]) -> Option<String> {
        let (lo, hi) = self.priors.tau_prior.support();
        if !(x[1] >= lo && x[1] <= hi) {
            return Some(format!("tau = {} outside prior support [{lo}, {hi}]", x[1]));
        }
        if self.priors.nu_prior.ln_density(x[2]) == f64::NEG_INFINITY {
            return Some(format!(
                "nu = {} not above {}",
                x[2],
                self.priors.nu_prior.lower_bound()
            ));
        }
        None
    }
}

/// Draw `n` differences from t(μ, τ, ν).
pub fn simulate_differences<R: Rng + ?Sized>(
    params: &TDistParams,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>, MetricError> {
    params.validate()?;
    let t = StudentTSampler::new(params.nu).map_err(|_| StatError::Domain {
        name: "nu",
        value: params.nu,
        reason: "rejected by sampler",
    })?;
    Ok((0..n).map(|_| params.mu + params.tau * t.sample(rng)).collect())
}
