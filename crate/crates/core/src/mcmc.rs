//! Adaptive random-walk Metropolis-within-Gibbs sampler and convergence
//! diagnostics (split R-hat, multi-chain ESS).
//!
//! Each sweep proposes every free parameter in turn with a Gaussian step
//! in its internal coordinate (identity or log). Step sizes are tuned in
//! batches during burn-in toward a target acceptance rate and frozen
//! afterwards. Proposals with a `-inf` log density are always rejected.
//!
//! Chain `c` draws from a ChaCha8 stream seeded with
//! [`chain_seed`]`(master_seed, c)`, so adding or removing chains never
//! changes the draws of the others, and results are identical whether the
//! chains run serially or on the rayon pool.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const INIT_RETRIES: usize = 1000;

#[derive(Debug, Error)]
pub enum McmcError {
    #[error("invalid chain configuration: {0}")]
    Config(String),
    #[error("invalid parameter specification: {0}")]
    ParamSpec(String),
    #[error("chain {chain}: no finite starting point after {retries} attempts ({reason})")]
    Initialization {
        chain: usize,
        retries: usize,
        reason: String,
    },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("malformed draw dump at line {line}: {message}")]
    DrawDump { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An unnormalized log posterior over a flat parameter vector.
pub trait LogDensity: Sync {
    fn log_density(&self, x: &[f64]) -> f64;

    /// Whether [`LogDensity::log_conditional`] is implemented. When it is,
    /// the sampler only evaluates the terms touching the updated coordinate.
    fn has_conditionals(&self) -> bool {
        false
    }

    /// All terms of the log density that involve coordinate `index`, up to
    /// an additive constant that does not depend on `x[index]`.
    fn log_conditional(&self, x: &[f64], index: usize) -> f64 {
        let _ = index;
        self.log_density(x)
    }

    /// Human-readable reason why `x` has zero density, if known.
    fn explain(&self, x: &[f64]) -> Option<String> {
        let _ = x;
        None
    }
}

impl<F> LogDensity for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn log_density(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Coordinate in which the random walk moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

impl Scale {
    fn to_internal(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log => v.ln(),
        }
    }

    fn from_internal(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log => v.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub init: f64,
    pub lower: f64,
    pub upper: f64,
    pub fixed: bool,
    pub scale: Scale,
    /// Initial proposal standard deviation, in internal coordinates.
    pub step: f64,
}

impl ParamSpec {
    pub fn free(name: impl Into<String>, init: f64) -> Self {
        Self {
            name: name.into(),
            init,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            fixed: false,
            scale: Scale::Linear,
            step: 1.0,
        }
    }

    pub fn fixed(name: impl Into<String>, value: f64) -> Self {
        Self {
            fixed: true,
            step: 0.0,
            ..Self::free(name, value)
        }
    }

    pub fn bounded(mut self, lower: f64, upper: f64) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn log_scale(mut self) -> Self {
        self.scale = Scale::Log;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    fn validate(&self) -> Result<(), McmcError> {
        let bad = |m: &str| Err(McmcError::ParamSpec(format!("{}: {}", self.name, m)));
        if !self.init.is_finite() {
            return bad("initial value must be finite");
        }
        if self.lower.is_nan() || self.upper.is_nan() || self.lower >= self.upper && !self.fixed {
            return bad("lower bound must be below upper bound");
        }
        if !self.fixed {
            if !(self.step.is_finite() && self.step > 0.0) {
                return bad("proposal step must be finite and positive");
            }
            if self.scale == Scale::Log && self.lower < 0.0 {
                return bad("log-scale parameters need a non-negative lower bound");
            }
            if !self.in_bounds(self.init) {
                return bad("initial value outside bounds");
            }
        }
        Ok(())
    }

    fn in_bounds(&self, v: f64) -> bool {
        v.is_finite() && v > self.lower && v < self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_chains: usize,
    /// Total iterations per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub master_seed: u64,
    /// Iterations per step-size adaptation batch.
    pub adapt_window: usize,
    pub target_accept: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            iterations: 30_000,
            burn_in: 5_000,
            thin: 1,
            master_seed: 20_240_101,
            adapt_window: 50,
            target_accept: 0.44,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), McmcError> {
        let bad = |m: &str| Err(McmcError::Config(m.to_string()));
        if self.n_chains == 0 {
            return bad("n_chains must be at least 1");
        }
        if self.burn_in >= self.iterations {
            return bad("burn_in must be smaller than iterations");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if self.adapt_window == 0 {
            return bad("adapt_window must be at least 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if self.retained_per_chain() == 0 {
            return bad("no draws retained: (iterations - burn_in) / thin is zero");
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin
    }
}

/// SplitMix64 finalizer applied to `master + (chain + 1) * golden_gamma`.
pub fn chain_seed(master_seed: u64, chain: usize) -> u64 {
    let mut z = master_seed.wrapping_add((chain as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Retained draws of every parameter, fixed ones included.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChains {
    pub param_names: Vec<String>,
    pub fixed: Vec<bool>,
    /// Per chain, row-major `[draw][param]`.
    pub draws: Vec<Vec<f64>>,
    /// Per chain, the log density at each retained draw.
    pub log_density: Vec<Vec<f64>>,
    /// Sampler iteration index of each retained draw (same for every chain).
    pub iterations: Vec<usize>,
    /// Per chain, post-burn-in acceptance rate of each parameter.
    pub acceptance: Vec<Vec<f64>>,
    pub chain_seeds: Vec<u64>,
}

impl PosteriorChains {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.iterations.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, McmcError> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| McmcError::UnknownParameter(name.to_string()))
    }

    pub fn draw(&self, chain: usize, i: usize) -> &[f64] {
        let p = self.n_params();
        &self.draws[chain][i * p..(i + 1) * p]
    }

    /// One trace per chain for parameter `index`.
    pub fn traces_at(&self, index: usize) -> Vec<Vec<f64>> {
        let p = self.n_params();
        self.draws
            .iter()
            .map(|c| c.iter().skip(index).step_by(p).copied().collect())
            .collect()
    }

    pub fn traces(&self, name: &str) -> Result<Vec<Vec<f64>>, McmcError> {
        Ok(self.traces_at(self.index_of(name)?))
    }

    /// All chains concatenated in chain order.
    pub fn pooled(&self, name: &str) -> Result<Vec<f64>, McmcError> {
        Ok(self.traces(name)?.concat())
    }

    /// Write the dump format `chain,iteration,<names...>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), McmcError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.param_names.iter().cloned());
        w.write_record(&header).map_err(csv_io)?;
        for c in 0..self.n_chains() {
            for (i, it) in self.iterations.iter().enumerate() {
                let mut row = vec![c.to_string(), it.to_string()];
                row.extend(self.draw(c, i).iter().map(|v| v.to_string()));
                w.write_record(&row).map_err(csv_io)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Read a dump written by [`PosteriorChains::write_csv`]. Sampler-only
    /// fields (acceptance, seeds, log density) come back empty, and a
    /// parameter is marked fixed when it is constant across every draw.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, McmcError> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| dump_err(1, e.to_string()))?
            .clone();
        if header.len() < 3 || &header[0] != "chain" || &header[1] != "iteration" {
            return Err(dump_err(1, "header must start with `chain,iteration`".into()));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut draws: Vec<Vec<f64>> = Vec::new();
        let mut iters_by_chain: Vec<Vec<usize>> = Vec::new();
        for (row_no, rec) in rdr.records().enumerate() {
            let line = row_no + 2;
            let rec = rec.map_err(|e| dump_err(line, e.to_string()))?;
            if rec.len() != header.len() {
                return Err(dump_err(line, format!("expected {} fields", header.len())));
            }
            let chain: usize = rec[0].parse().map_err(|_| dump_err(line, "bad chain index".into()))?;
            let it: usize = rec[1].parse().map_err(|_| dump_err(line, "bad iteration".into()))?;
            if chain > draws.len() {
                return Err(dump_err(line, "chains must appear in order".into()));
            }
            if chain == draws.len() {
                draws.push(Vec::new());
                iters_by_chain.push(Vec::new());
            }
            iters_by_chain[chain].push(it);
            for field in rec.iter().skip(2) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| dump_err(line, format!("`{field}` is not a number")))?;
                draws[chain].push(v);
            }
        }
        let Some(iterations) = iters_by_chain.first().cloned() else {
            return Err(dump_err(2, "no draws".into()));
        };
        if iters_by_chain.iter().any(|c| *c != iterations) {
            return Err(dump_err(2, "chains disagree on retained iterations".into()));
        }
        let mut chains = Self {
            fixed: vec![false; names.len()],
            param_names: names,
            log_density: Vec::new(),
            iterations,
            acceptance: Vec::new(),
            chain_seeds: Vec::new(),
            draws,
        };
        for j in 0..chains.n_params() {
            let first = chains.draws[0][j];
            chains.fixed[j] = chains.traces_at(j).iter().flatten().all(|&v| v == first);
        }
        Ok(chains)
    }
}

fn csv_io(e: csv::Error) -> McmcError {
    McmcError::Io(std::io::Error::other(e))
}

fn dump_err(line: usize, message: String) -> McmcError {
    McmcError::DrawDump { line, message }
}

/// Sample `target` over the parameters in `specs`.
pub fn run_chains<T: LogDensity + ?Sized>(
    target: &T,
    specs: &[ParamSpec],
    config: &ChainConfig,
) -> Result<PosteriorChains, McmcError> {
    config.validate()?;
    if specs.is_empty() {
        return Err(McmcError::ParamSpec("no parameters".into()));
    }
    for s in specs {
        s.validate()?;
    }

    let results: Vec<Result<ChainOutput, McmcError>> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_one_chain(target, specs, config, c))
        .collect();

    let mut out = PosteriorChains {
        param_names: specs.iter().map(|s| s.name.clone()).collect(),
        fixed: specs.iter().map(|s| s.fixed).collect(),
        draws: Vec::with_capacity(config.n_chains),
        log_density: Vec::with_capacity(config.n_chains),
        iterations: Vec::new(),
        acceptance: Vec::with_capacity(config.n_chains),
        chain_seeds: (0..config.n_chains)
            .map(|c| chain_seed(config.master_seed, c))
            .collect(),
    };
    for r in results {
        let chain = r?;
        out.draws.push(chain.draws);
        out.log_density.push(chain.log_density);
        out.acceptance.push(chain.acceptance);
        out.iterations = chain.iterations;
    }
    Ok(out)
}

struct ChainOutput {
    draws: Vec<f64>,
    log_density: Vec<f64>,
    iterations: Vec<usize>,
    acceptance: Vec<f64>,
}

fn initial_point<T: LogDensity + ?Sized>(
    target: &T,
    specs: &[ParamSpec],
    rng: &mut ChaCha8Rng,
    chain: usize,
) -> Result<Vec<f64>, McmcError> {
    let base: Vec<f64> = specs.iter().map(|s| s.init).collect();
    for _ in 0..INIT_RETRIES {
        let x: Vec<f64> = specs
            .iter()
            .map(|s| {
                if s.fixed {
                    return s.init;
                }
                let z: f64 = rng.sample(StandardNormal);
                let v = s.scale.from_internal(s.scale.to_internal(s.init) + s.step * z);
                if s.in_bounds(v) {
                    v
                } else {
                    s.init
                }
            })
            .collect();
        if target.log_density(&x).is_finite() {
            return Ok(x);
        }
    }
    let reason = target
        .explain(&base)
        .unwrap_or_else(|| "log density is -inf at the initial values".to_string());
    Err(McmcError::Initialization {
        chain,
        retries: INIT_RETRIES,
        reason,
    })
}

fn run_one_chain<T: LogDensity + ?Sized>(
    target: &T,
    specs: &[ParamSpec],
    config: &ChainConfig,
    chain: usize,
) -> Result<ChainOutput, McmcError> {
    let mut rng = ChaCha8Rng::seed_from_u64(chain_seed(config.master_seed, chain));
    let mut x = initial_point(target, specs, &mut rng, chain)?;
    let n_params = specs.len();
    let free: Vec<usize> = (0..n_params).filter(|&j| !specs[j].fixed).collect();
    let conditional = target.has_conditionals();

    let mut steps: Vec<f64> = specs.iter().map(|s| s.step).collect();
    let mut batch_accepts = vec![0usize; n_params];
    let mut kept_accepts = vec![0usize; n_params];
    let mut batches = 0usize;
    let mut current_lp = target.log_density(&x);

    let n_keep = config.retained_per_chain();
    let mut draws = Vec::with_capacity(n_keep * n_params);
    let mut log_density = Vec::with_capacity(n_keep);
    let mut iterations = Vec::with_capacity(n_keep);

    for it in 0..config.iterations {
        for &j in &free {
            let spec = &specs[j];
            let old = x[j];
            let old_internal = spec.scale.to_internal(old);
            let z: f64 = rng.sample(StandardNormal);
            let proposal_internal = old_internal + steps[j] * z;
            let proposal = spec.scale.from_internal(proposal_internal);
            // uniform draw is taken unconditionally to keep the stream aligned
            let u: f64 = rng.random();
            if !spec.in_bounds(proposal) {
                continue;
            }
            let (lp_old, lp_new) = if conditional {
                let before = target.log_conditional(&x, j);
                x[j] = proposal;
                (before, target.log_conditional(&x, j))
            } else {
                x[j] = proposal;
                (current_lp, target.log_density(&x))
            };
            let jacobian = match spec.scale {
                Scale::Linear => 0.0,
                Scale::Log => proposal_internal - old_internal,
            };
            let log_ratio = lp_new - lp_old + jacobian;
            if lp_new.is_finite() && u.ln() < log_ratio {
                if !conditional {
                    current_lp = lp_new;
                }
                if it < config.burn_in {
                    batch_accepts[j] += 1;
                } else {
                    kept_accepts[j] += 1;
                }
            } else {
                x[j] = old;
            }
        }

        if it < config.burn_in && (it + 1) % config.adapt_window == 0 {
            batches += 1;
            let delta = (1.0 / (batches as f64).sqrt()).min(0.1);
            for &j in &free {
                let rate = batch_accepts[j] as f64 / config.adapt_window as f64;
                if rate > config.target_accept {
                    steps[j] *= delta.exp();
                } else {
                    steps[j] *= (-delta).exp();
                }
                batch_accepts[j] = 0;
            }
        }

        if it >= config.burn_in && (it + 1 - config.burn_in) % config.thin == 0 {
            draws.extend_from_slice(&x);
            let lp = if conditional {
                target.log_density(&x)
            } else {
                current_lp
            };
            log_density.push(lp);
            iterations.push(it);
        }
    }

    let kept_iters = (config.iterations - config.burn_in) as f64;
    let acceptance = (0..n_params)
        .map(|j| {
            if specs[j].fixed {
                0.0
            } else {
                kept_accepts[j] as f64 / kept_iters
            }
        })
        .collect();
    Ok(ChainOutput {
        draws,
        log_density,
        iterations,
        acceptance,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Split-chain potential scale reduction factor.
///
/// `None` when fewer than two chains or fewer than four draws per chain are
/// available. A parameter with zero variance everywhere reports 1.
pub fn rhat_traces(traces: &[Vec<f64>]) -> Option<f64> {
    if traces.len() < 2 {
        return None;
    }
    let n = traces.iter().map(Vec::len).min()?;
    if n < 4 {
        return None;
    }
    let half = n / 2;
    let mut splits: Vec<&[f64]> = Vec::with_capacity(2 * traces.len());
    for t in traces {
        splits.push(&t[..half]);
        splits.push(&t[n - half..n]);
    }
    let len = half as f64;
    let means: Vec<f64> = splits.iter().map(|s| mean(s)).collect();
    let w = splits.iter().map(|s| sample_variance(s)).sum::<f64>() / splits.len() as f64;
    let b = len * sample_variance(&means);
    if w <= 0.0 {
        return Some(if b <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (len - 1.0) / len * w + b / len;
    Some((var_plus / w).sqrt())
}

/// Effective sample size with Geyer's initial monotone sequence over the
/// multi-chain autocorrelation estimate. Constant input returns the total
/// number of draws.
pub fn ess_traces(traces: &[Vec<f64>]) -> f64 {
    let m = traces.len();
    let n = traces.iter().map(Vec::len).min().unwrap_or(0);
    let total = (m * n) as f64;
    if m == 0 || n < 2 {
        return total.max(1.0);
    }
    let traces: Vec<&[f64]> = traces.iter().map(|t| &t[..n]).collect();
    let means: Vec<f64> = traces.iter().map(|t| mean(t)).collect();
    let w = traces.iter().map(|t| sample_variance(t)).sum::<f64>() / m as f64;
    let var_plus = if m > 1 {
        (n as f64 - 1.0) / n as f64 * w + sample_variance(&means)
    } else {
        (n as f64 - 1.0) / n as f64 * w
    };
    if !(var_plus > 0.0) {
        return total;
    }

    // biased autocovariance at lag t, averaged over chains
    let acov = |lag: usize| -> f64 {
        traces
            .iter()
            .zip(&means)
            .map(|(t, &mu)| {
                (0..n - lag)
                    .map(|i| (t[i] - mu) * (t[i + lag] - mu))
                    .sum::<f64>()
                    / n as f64
            })
            .sum::<f64>()
            / m as f64
    };
    let rho = |lag: usize| -> f64 {
        if lag >= n {
            0.0
        } else {
            1.0 - (w - acov(lag)) / var_plus
        }
    };

    // rho_hat is zero-padded: pairs that go negative are never stored
    let mut rho_hat = vec![0.0; n + 2];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut max_t = 1;
    let mut s = 1;
    while s + 4 < n && even + odd > 0.0 {
        even = rho(s + 1);
        odd = rho(s + 2);
        if even + odd >= 0.0 {
            rho_hat[s + 1] = even;
            rho_hat[s + 2] = odd;
        }
        max_t = s + 2;
        s += 2;
    }
    // initial monotone sequence on the pair sums
    let mut t = 1;
    while t + 2 <= max_t {
        let prev = rho_hat[t - 1] + rho_hat[t];
        if rho_hat[t + 1] + rho_hat[t + 2] > prev {
            rho_hat[t + 1] = prev / 2.0;
            rho_hat[t + 2] = prev / 2.0;
        }
        t += 2;
    }
    let sum: f64 = rho_hat[..max_t].iter().sum();
    let tau = (-1.0 + 2.0 * sum + rho_hat[max_t]).max(1.0 / total.log10());
    total / tau
}

/// Split R-hat of the named parameter; `Ok(None)` when unavailable.
pub fn rhat(chains: &PosteriorChains, name: &str) -> Result<Option<f64>, McmcError> {
    Ok(rhat_traces(&chains.traces(name)?))
}

pub fn ess(chains: &PosteriorChains, name: &str) -> Result<f64, McmcError> {
    Ok(ess_traces(&chains.traces(name)?))
}
