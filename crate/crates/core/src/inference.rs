//! Posterior summaries and the HDI + ROPE decision rule.
//!
//! Everything here works on raw draw arrays. Effect sizes are computed
//! draw by draw, so they are full posteriors rather than point estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Histogram resolution used by [`mode_estimate`].
pub const MODE_BINS: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("HDI mass must lie strictly between 0 and 1, got {0}")]
    BadMass(f64),
    #[error("ROPE lower bound {lo} must be below upper bound {hi}")]
    BadRope { lo: f64, hi: f64 },
    #[error("draw arrays differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite draw at index {0}")]
    NonFinite(usize),
    /// A scale draw that is not positive means the sampler let an
    /// out-of-support point through.
    #[error("scale draw {value} at index {index} is not positive")]
    InvariantViolation { index: usize, value: f64 },
}

fn check_draws(draws: &[f64]) -> Result<(), InferenceError> {
    if draws.len() < 2 {
        return Err(InferenceError::TooFewDraws {
            needed: 2,
            got: draws.len(),
        });
    }
    if let Some(i) = draws.iter().position(|v| !v.is_finite()) {
        return Err(InferenceError::NonFinite(i));
    }
    Ok(())
}

fn sorted(draws: &[f64]) -> Vec<f64> {
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Shortest interval over the sorted draws holding ⌈mass·n⌉ of them; ties
/// go to the leftmost window.
pub fn hdi(draws: &[f64], mass: f64) -> Result<(f64, f64), InferenceError> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(InferenceError::BadMass(mass));
    }
    check_draws(draws)?;
    Ok(hdi_sorted(&sorted(draws), mass))
}

fn hdi_sorted(s: &[f64], mass: f64) -> (f64, f64) {
    let n = s.len();
    // guard against 0.95 * 100 landing a hair above 95
    let k = ((mass * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=n - k {
        let w = s[i + k - 1] - s[i];
        if w < best_width {
            best_width = w;
            best = i;
        }
    }
    (s[best], s[best + k - 1])
}

/// Midpoint of the fullest bin of a [`MODE_BINS`]-bin histogram over the
/// draw range. Ties go to the lowest bin.
pub fn mode_estimate(draws: &[f64]) -> Result<f64, InferenceError> {
    check_draws(draws)?;
    let (lo, hi) = min_max(draws);
    if lo == hi {
        return Ok(lo);
    }
    let counts = histogram(draws, lo, hi, MODE_BINS);
    let width = (hi - lo) / MODE_BINS as f64;
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Ok(lo + (best as f64 + 0.5) * width)
}

fn min_max(draws: &[f64]) -> (f64, f64) {
    draws
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Counts over `bins` equal-width bins spanning `[lo, hi]`; the top edge
/// belongs to the last bin.
pub fn histogram(draws: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for &v in draws {
        if v < lo || v > hi {
            continue;
        }
        let idx = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    counts
}

/// Mean, median, binned mode and HDI of one posterior quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    pub hdi_mass: f64,
    pub hdi_lo: f64,
    pub hdi_hi: f64,
}

pub fn summarize(draws: &[f64], hdi_mass: f64) -> Result<PosteriorSummary, InferenceError> {
    if !(hdi_mass > 0.0 && hdi_mass < 1.0) {
        return Err(InferenceError::BadMass(hdi_mass));
    }
    check_draws(draws)?;
    let s = sorted(draws);
    let (hdi_lo, hdi_hi) = hdi_sorted(&s, hdi_mass);
    Ok(PosteriorSummary {
        mean: draws.iter().sum::<f64>() / draws.len() as f64,
        median: median_sorted(&s),
        mode: mode_estimate(draws)?,
        hdi_mass,
        hdi_lo,
        hdi_hi,
    })
}

pub fn median(draws: &[f64]) -> Result<f64, InferenceError> {
    if draws.is_empty() {
        return Err(InferenceError::TooFewDraws { needed: 1, got: 0 });
    }
    Ok(median_sorted(&sorted(draws)))
}

fn median_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn check_scales(tau: &[f64]) -> Result<(), InferenceError> {
    match tau.iter().position(|&t| !(t > 0.0)) {
        Some(index) => Err(InferenceError::InvariantViolation {
            index,
            value: tau[index],
        }),
        None => Ok(()),
    }
}

/// (μ − μ₀)/τ for every draw.
pub fn effect_size_metric(mu: &[f64], tau: &[f64], mu0: f64) -> Result<Vec<f64>, InferenceError> {
    if mu.len() != tau.len() {
        return Err(InferenceError::LengthMismatch(mu.len(), tau.len()));
    }
    check_scales(tau)?;
    Ok(mu.iter().zip(tau).map(|(m, t)| (m - mu0) / t).collect())
}

/// (μ_B − μ_A) / √(½(τ_A² + τ_B²)) for every draw; positive values mean
/// group B sits higher on the latent scale.
pub fn effect_size_two_group(
    mu_a: &[f64],
    mu_b: &[f64],
    tau_a: &[f64],
    tau_b: &[f64],
) -> Result<Vec<f64>, InferenceError> {
    let n = mu_a.len();
    for len in [mu_b.len(), tau_a.len(), tau_b.len()] {
        if len != n {
            return Err(InferenceError::LengthMismatch(n, len));
        }
    }
    check_scales(tau_a)?;
    check_scales(tau_b)?;
    Ok((0..n)
        .map(|i| (mu_b[i] - mu_a[i]) / (0.5 * (tau_a[i] * tau_a[i] + tau_b[i] * tau_b[i])).sqrt())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rope {
    pub lo: f64,
    pub hi: f64,
}

impl Rope {
    pub fn new(lo: f64, hi: f64) -> Result<Self, InferenceError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(InferenceError::BadRope { lo, hi });
        }
        Ok(Self { lo, hi })
    }
}

impl Default for Rope {
    /// Half of a small effect on either side of zero.
    fn default() -> Self {
        Self { lo: -0.1, hi: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AcceptNull,
    RejectNull,
    Undecided,
}

impl Verdict {
    /// The HDI-versus-ROPE rule: containment accepts the null value,
    /// disjointness rejects it, any partial overlap withholds a decision.
    pub fn from_intervals(hdi: (f64, f64), rope: Rope) -> Self {
        let (lo, hi) = hdi;
        if lo >= rope.lo && hi <= rope.hi {
            Verdict::AcceptNull
        } else if hi < rope.lo || lo > rope.hi {
            Verdict::RejectNull
        } else {
            Verdict::Undecided
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeDecision {
    pub rope_lo: f64,
    pub rope_hi: f64,
    pub hdi_mass: f64,
    pub hdi_lo: f64,
    pub hdi_hi: f64,
    pub pct_below: f64,
    pub pct_inside: f64,
    pub pct_above: f64,
    pub verdict: Verdict,
}

/// Decide on the null value with the HDI and report how much of the whole
/// posterior falls below, inside and above the ROPE.
pub fn rope_decision(draws: &[f64], rope: Rope, hdi_mass: f64) -> Result<RopeDecision, InferenceError> {
    let rope = Rope::new(rope.lo, rope.hi)?;
    let interval = hdi(draws, hdi_mass)?;
    let n = draws.len();
    let below = draws.iter().filter(|&&v| v < rope.lo).count();
    let above = draws.iter().filter(|&&v| v > rope.hi).count();
    let inside = n - below - above;
    let pct = |c: usize| 100.0 * c as f64 / n as f64;
    Ok(RopeDecision {
        rope_lo: rope.lo,
        rope_hi: rope.hi,
        hdi_mass,
        hdi_lo: interval.0,
        hdi_hi: interval.1,
        pct_below: pct(below),
        pct_inside: pct(inside),
        pct_above: pct(above),
        verdict: Verdict::from_intervals(interval, rope),
    })
}
