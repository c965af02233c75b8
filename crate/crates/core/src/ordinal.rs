//! Cumulative ordinal model with a latent t distribution, for Likert scales
//! with several items answered by several groups.
//!
//! Every group g has its own latent (μ_g, τ_g, ν_g), shared by all items of
//! the scale. Every item i has its own thresholds θ₁..θ_{K-1}, shared by all
//! groups. The probability of level k is Ψ(θ_k) − Ψ(θ_{k−1}) with θ₀ = −∞
//! and θ_K = +∞. The outer thresholds of the first item are pinned at 1.5
//! and K − 0.5 so the latent scale reads in response units.
//!
//! Threshold order is not enforced by the parameterization. A draw whose
//! thresholds are not strictly ascending gets zero likelihood and is
//! rejected by the sampler.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StudentT as StudentTSampler};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mcmc::{LogDensity, ParamSpec};
use crate::statfn::{NuPrior, Prior, StatError, StudentT, TDistParams};

/// Fixed value of the first item's lowest threshold.
pub const ANCHOR_LOW: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrdinalError {
    #[error("level {level} outside 1..={levels}")]
    LevelOutOfRange { level: usize, levels: usize },
    #[error("an ordinal scale needs at least 3 levels, got {0}")]
    TooFewLevels(usize),
    #[error("unknown padding strategy `{0}` (expected none, compress, pad_empty_only, pad_all_levels or pad_proportional)")]
    UnknownStrategy(String),
    #[error("response refers to missing {kind} index {index}")]
    BadIndex { kind: &'static str, index: usize },
    #[error("dataset needs at least one group and one item")]
    Empty,
    #[error("threshold set does not match the dataset: {0}")]
    ThresholdShape(String),
    #[error("anchored threshold of item {item} is {value}, expected {expected}")]
    AnchorMoved { item: usize, value: f64, expected: f64 },
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// Map a level onto the reversed scale: k → K + 1 − k.
pub fn apply_reverse_scale(level: usize, levels: usize) -> Result<usize, OrdinalError> {
    if level < 1 || level > levels {
        return Err(OrdinalError::LevelOutOfRange { level, levels });
    }
    Ok(levels + 1 - level)
}

/// Upper fixed threshold of the anchor item for a K-level scale.
pub fn anchor_high(levels: usize) -> f64 {
    levels as f64 - 0.5
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub reverse: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Item {
    pub fn new(id: impl Into<String>, reverse: bool) -> Self {
        Self {
            id: id.into(),
            reverse,
            text: None,
        }
    }
}

/// One answer, already on the "higher is more positive" orientation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub participant: String,
    pub group: usize,
    pub item: usize,
    pub level: usize,
    /// Added by padding rather than observed.
    #[serde(default)]
    pub synthetic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddingAction {
    pub group: String,
    pub item: String,
    pub level: usize,
    pub count_added: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingStrategy {
    /// Leave empty levels alone (a warning names them).
    None,
    /// Drop levels that nobody used and relabel the rest.
    Compress,
    /// One extra answer in each empty level.
    #[default]
    PadEmptyOnly,
    /// One extra answer in every level of a cell that has an empty level.
    PadAllLevels,
    /// One extra answer per empty level plus up to K answers in total spread
    /// over the used levels to keep the observed frequencies.
    PadProportional,
}

impl PaddingStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            PaddingStrategy::None => "none",
            PaddingStrategy::Compress => "compress",
            PaddingStrategy::PadEmptyOnly => "pad_empty_only",
            PaddingStrategy::PadAllLevels => "pad_all_levels",
            PaddingStrategy::PadProportional => "pad_proportional",
        }
    }
}

impl fmt::Display for PaddingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PaddingStrategy {
    type Err = OrdinalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(PaddingStrategy::None),
            "compress" => Ok(PaddingStrategy::Compress),
            "pad_empty_only" => Ok(PaddingStrategy::PadEmptyOnly),
            "pad_all_levels" => Ok(PaddingStrategy::PadAllLevels),
            "pad_proportional" => Ok(PaddingStrategy::PadProportional),
            other => Err(OrdinalError::UnknownStrategy(other.to_string())),
        }
    }
}

/// Response counts indexed by (group, item, level).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelCounts {
    pub levels: usize,
    pub n_groups: usize,
    pub n_items: usize,
    counts: Vec<usize>,
}

impl LevelCounts {
    pub fn zeros(n_groups: usize, n_items: usize, levels: usize) -> Self {
        Self {
            levels,
            n_groups,
            n_items,
            counts: vec![0; n_groups * n_items * levels],
        }
    }

    fn offset(&self, group: usize, item: usize) -> usize {
        (group * self.n_items + item) * self.levels
    }

    /// Counts of levels 1..=K (index 0 is level 1).
    pub fn cell(&self, group: usize, item: usize) -> &[usize] {
        let o = self.offset(group, item);
        &self.counts[o..o + self.levels]
    }

    pub fn add(&mut self, group: usize, item: usize, level: usize, n: usize) {
        let o = self.offset(group, item);
        self.counts[o + level - 1] += n;
    }

    /// Pooled over groups and items.
    pub fn totals(&self) -> Vec<usize> {
        let mut t = vec![0; self.levels];
        for chunk in self.counts.chunks(self.levels) {
            for (acc, c) in t.iter_mut().zip(chunk) {
                *acc += c;
            }
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalDataset {
    /// Number of response levels K.
    pub levels: usize,
    pub groups: Vec<String>,
    /// Scale order; the first item carries the anchored thresholds.
    pub items: Vec<Item>,
    pub responses: Vec<Response>,
    pub padding_log: Vec<PaddingAction>,
    /// Original level numbers removed by compression, if any.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compressed_levels: Vec<usize>,
}

impl OrdinalDataset {
    pub fn new(
        levels: usize,
        groups: Vec<String>,
        items: Vec<Item>,
        responses: Vec<Response>,
    ) -> Result<Self, OrdinalError> {
        let d = Self {
            levels,
            groups,
            items,
            responses,
            padding_log: Vec::new(),
            compressed_levels: Vec::new(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), OrdinalError> {
        if self.levels < 3 {
            return Err(OrdinalError::TooFewLevels(self.levels));
        }
        if self.groups.is_empty() || self.items.is_empty() {
            return Err(OrdinalError::Empty);
        }
        for r in &self.responses {
            if r.level < 1 || r.level > self.levels {
                return Err(OrdinalError::LevelOutOfRange {
                    level: r.level,
                    levels: self.levels,
                });
            }
            if r.group >= self.groups.len() {
                return Err(OrdinalError::BadIndex {
                    kind: "group",
                    index: r.group,
                });
            }
            if r.item >= self.items.len() {
                return Err(OrdinalError::BadIndex {
                    kind: "item",
                    index: r.item,
                });
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> LevelCounts {
        let mut c = LevelCounts::zeros(self.groups.len(), self.items.len(), self.levels);
        for r in &self.responses {
            c.add(r.group, r.item, r.level, 1);
        }
        c
    }

    /// (group, item, level) triples with no responses.
    pub fn empty_levels(&self) -> Vec<(usize, usize, usize)> {
        let c = self.counts();
        let mut out = Vec::new();
        for g in 0..self.groups.len() {
            for i in 0..self.items.len() {
                for (k, &n) in c.cell(g, i).iter().enumerate() {
                    if n == 0 {
                        out.push((g, i, k + 1));
                    }
                }
            }
        }
        out
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == name)
    }

    /// Drop every response from the listed participants.
    pub fn exclude(&self, ids: &[String]) -> Self {
        let mut d = self.clone();
        d.responses.retain(|r| !ids.contains(&r.participant));
        d
    }

    /// Σ log p over all responses for the given latents and thresholds.
    pub fn log_likelihood(&self, latents: &GroupLatents, thresholds: &ThresholdSet) -> Result<f64, OrdinalError> {
        if latents.groups.len() != self.groups.len() {
            return Err(OrdinalError::ThresholdShape(format!(
                "{} latent triples for {} groups",
                latents.groups.len(),
                self.groups.len()
            )));
        }
        thresholds.check_shape(self.items.len(), self.levels)?;
        let counts = self.counts();
        let mut total = 0.0;
        for (g, p) in latents.groups.iter().enumerate() {
            let t = StudentT::new(*p)?;
            for (i, th) in thresholds.values.iter().enumerate() {
                total += cell_log_likelihood(&t, th, counts.cell(g, i));
                if total == f64::NEG_INFINITY {
                    return Ok(total);
                }
            }
        }
        Ok(total)
    }
}

/// Per-item thresholds θ₁..θ_{K−1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub levels: usize,
    pub values: Vec<Vec<f64>>,
}

impl ThresholdSet {
    /// Equally spaced thresholds k + 0.5 for every item; the anchors of
    /// item 0 come out at their fixed values.
    pub fn equally_spaced(n_items: usize, levels: usize) -> Self {
        let row: Vec<f64> = (1..levels).map(|k| k as f64 + 0.5).collect();
        Self {
            levels,
            values: vec![row; n_items],
        }
    }

    pub fn check_shape(&self, n_items: usize, levels: usize) -> Result<(), OrdinalError> {
        if self.levels != levels || self.values.len() != n_items {
            return Err(OrdinalError::ThresholdShape(format!(
                "{} items x {} levels, expected {n_items} x {levels}",
                self.values.len(),
                self.levels
            )));
        }
        if let Some(i) = self.values.iter().position(|v| v.len() != levels - 1) {
            return Err(OrdinalError::ThresholdShape(format!("item {i} needs {} thresholds", levels - 1)));
        }
        Ok(())
    }

    /// Item 0's outer thresholds sit exactly at 1.5 and K − 0.5.
    pub fn check_anchors(&self) -> Result<(), OrdinalError> {
        let first = &self.values[0];
        let hi = anchor_high(self.levels);
        if first[0] != ANCHOR_LOW {
            return Err(OrdinalError::AnchorMoved {
                item: 0,
                value: first[0],
                expected: ANCHOR_LOW,
            });
        }
        if first[self.levels - 2] != hi {
            return Err(OrdinalError::AnchorMoved {
                item: 0,
                value: first[self.levels - 2],
                expected: hi,
            });
        }
        Ok(())
    }

    pub fn is_strictly_ascending(&self) -> bool {
        self.values.iter().all(|v| strictly_ascending(v))
    }
}

fn strictly_ascending(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLatents {
    pub groups: Vec<TDistParams>,
}

/// Level probabilities for one latent distribution and one threshold set.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelProbabilities {
    pub probs: Vec<f64>,
    /// False when some probability came out negative (inverted thresholds);
    /// such a parameter point has zero likelihood.
    pub valid: bool,
}

pub fn level_probabilities(latents: &TDistParams, thresholds: &[f64]) -> Result<LevelProbabilities, OrdinalError> {
    let t = StudentT::new(*latents)?;
    Ok(level_probabilities_with(&t, thresholds))
}

fn level_probabilities_with(t: &StudentT, thresholds: &[f64]) -> LevelProbabilities {
    let mut probs = Vec::with_capacity(thresholds.len() + 1);
    let mut prev = 0.0;
    for &th in thresholds {
        let c = t.cdf(th);
        probs.push(c - prev);
        prev = c;
    }
    probs.push(1.0 - prev);
    let valid = probs.iter().all(|&p| p >= 0.0);
    LevelProbabilities { probs, valid }
}

/// Σ_k n_k log p_k for one (group, item) cell; `-inf` for non-ascending
/// thresholds or a used level with zero probability.
fn cell_log_likelihood(t: &StudentT, thresholds: &[f64], counts: &[usize]) -> f64 {
    if !strictly_ascending(thresholds) {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    let mut prev = 0.0;
    for k in 0..counts.len() {
        let c = if k < thresholds.len() { t.cdf(thresholds[k]) } else { 1.0 };
        let p = c - prev;
        prev = c;
        if p < 0.0 {
            return f64::NEG_INFINITY;
        }
        if counts[k] > 0 {
            total += counts[k] as f64 * p.ln();
        }
    }
    total
}

/// Extra answers per level that `strategy` adds to one cell. Compression is
/// not a per-cell operation and yields no additions here.
pub fn padding_additions(counts: &[usize], strategy: PaddingStrategy) -> Vec<usize> {
    let k = counts.len();
    let empty: Vec<bool> = counts.iter().map(|&c| c == 0).collect();
    let any_empty = empty.iter().any(|&e| e);
    match strategy {
        PaddingStrategy::None | PaddingStrategy::Compress => vec![0; k],
        _ if !any_empty => vec![0; k],
        PaddingStrategy::PadEmptyOnly => empty.iter().map(|&e| e as usize).collect(),
        PaddingStrategy::PadAllLevels => vec![1; k],
        PaddingStrategy::PadProportional => proportional_additions(counts),
    }
}

/// One answer per empty level, then the allocation of at most K − e further
/// answers over the used levels whose frequencies come closest (squared
/// error) to the observed ones. Ties prefer fewer added answers.
fn proportional_additions(counts: &[usize]) -> Vec<usize> {
    let k = counts.len();
    let n: usize = counts.iter().sum();
    let base: Vec<usize> = counts.iter().map(|&c| (c == 0) as usize).collect();
    let e: usize = base.iter().sum();
    if n == 0 {
        return base;
    }
    let target: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let used: Vec<usize> = (0..k).filter(|&j| counts[j] > 0).collect();
    let budget = k - e;

    let score = |extra: &[usize]| -> f64 {
        let mut new = base.clone();
        for (slot, &j) in used.iter().enumerate() {
            new[j] += extra[slot];
        }
        let total = (n + new.iter().sum::<usize>()) as f64;
        (0..k)
            .map(|j| ((counts[j] + new[j]) as f64 / total - target[j]).powi(2))
            .sum()
    };

    let mut best = vec![0; used.len()];
    let mut best_score = score(&best);
    let mut best_added = 0;
    let mut current = vec![0; used.len()];
    enumerate_allocations(&mut current, 0, budget, &mut |alloc| {
        let s = score(alloc);
        let added: usize = alloc.iter().sum();
        if s < best_score - 1e-15 || ((s - best_score).abs() <= 1e-15 && added < best_added) {
            best_score = s;
            best_added = added;
            best.copy_from_slice(alloc);
        }
    });

    let mut out = base;
    for (slot, &j) in used.iter().enumerate() {
        out[j] += best[slot];
    }
    out
}

fn enumerate_allocations(current: &mut [usize], pos: usize, remaining: usize, visit: &mut dyn FnMut(&[usize])) {
    if pos == current.len() {
        visit(current);
        return;
    }
    for a in 0..=remaining {
        current[pos] = a;
        enumerate_allocations(current, pos + 1, remaining - a, visit);
    }
    current[pos] = 0;
}

/// Apply `strategy` to a single vector of level counts. Compression returns
/// the shorter vector of used levels.
pub fn pad_counts(counts: &[usize], strategy: PaddingStrategy) -> Vec<usize> {
    match strategy {
        PaddingStrategy::Compress => counts.iter().copied().filter(|&c| c > 0).collect(),
        _ => counts
            .iter()
            .zip(padding_additions(counts, strategy))
            .map(|(c, a)| c + a)
            .collect(),
    }
}

/// Remove empty levels from the data, per (group, item) cell, according to
/// `strategy`. Added answers are flagged synthetic and logged.
pub fn pad_empty_levels(dataset: &OrdinalDataset, strategy: PaddingStrategy) -> Result<OrdinalDataset, OrdinalError> {
    dataset.validate()?;
    let mut out = dataset.clone();
    match strategy {
        PaddingStrategy::None => {
            let empty = dataset.empty_levels();
            if !empty.is_empty() {
                let names: Vec<String> = empty
                    .iter()
                    .map(|&(g, i, k)| format!("{}/{}/level {k}", dataset.groups[g], dataset.items[i].id))
                    .collect();
                warn!("empty levels left unpadded: {}", names.join(", "));
            }
            Ok(out)
        }
        PaddingStrategy::Compress => compress_levels(dataset),
        _ => {
            let counts = dataset.counts();
            let mut serial = 0;
            for g in 0..dataset.groups.len() {
                for i in 0..dataset.items.len() {
                    let adds = padding_additions(counts.cell(g, i), strategy);
                    for (k, &a) in adds.iter().enumerate() {
                        if a == 0 {
                            continue;
                        }
                        out.padding_log.push(PaddingAction {
                            group: dataset.groups[g].clone(),
                            item: dataset.items[i].id.clone(),
                            level: k + 1,
                            count_added: a,
                        });
                        for _ in 0..a {
                            serial += 1;
                            out.responses.push(Response {
                                participant: format!("pad-{serial}"),
                                group: g,
                                item: i,
                                level: k + 1,
                                synthetic: true,
                            });
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Drop levels unused across the whole dataset and renumber the rest.
fn compress_levels(dataset: &OrdinalDataset) -> Result<OrdinalDataset, OrdinalError> {
    let totals = dataset.counts().totals();
    let removed: Vec<usize> = (1..=dataset.levels).filter(|&k| totals[k - 1] == 0).collect();
    let new_levels = dataset.levels - removed.len();
    if new_levels < 3 {
        return Err(OrdinalError::TooFewLevels(new_levels));
    }
    let mut relabel = vec![0; dataset.levels + 1];
    let mut next = 0;
    for k in 1..=dataset.levels {
        if totals[k - 1] > 0 {
            next += 1;
            relabel[k] = next;
        }
    }
    let mut out = dataset.clone();
    out.levels = new_levels;
    for r in &mut out.responses {
        r.level = relabel[r.level];
    }
    out.compressed_levels.extend(removed);
    if !out.empty_levels().is_empty() {
        warn!("compression left empty levels inside individual group/item cells");
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupPrior {
    pub mu: Prior,
    pub tau: Prior,
    pub nu: NuPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalPriors {
    pub groups: Vec<GroupPrior>,
    /// Free threshold θ_k of any item ~ normal(k + 0.5, theta_sd).
    pub theta_sd: f64,
}

impl OrdinalPriors {
    pub fn theta_prior(&self, k: usize) -> Prior {
        Prior::Normal {
            mean: k as f64 + 0.5,
            sd: self.theta_sd,
        }
    }
}

/// Prior widths as multiples of K; the defaults put μ_g and τ_g near the
/// response range and keep the thresholds loose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrdinalPriorConfig {
    /// μ_g ~ normal((1 + K)/2, mu_sd_per_level · K)
    pub mu_sd_per_level: f64,
    /// τ_g ~ uniform(tau_lo_per_level · K, tau_hi_per_level · K)
    pub tau_lo_per_level: f64,
    pub tau_hi_per_level: f64,
    pub nu: NuPrior,
    /// θ ~ normal(k + 0.5, theta_sd_per_level · K)
    pub theta_sd_per_level: f64,
}

impl Default for OrdinalPriorConfig {
    fn default() -> Self {
        Self {
            mu_sd_per_level: 1.0,
            tau_lo_per_level: 1e-3,
            tau_hi_per_level: 10.0,
            nu: NuPrior::default(),
            theta_sd_per_level: 2.0,
        }
    }
}

pub fn default_ordinal_priors(dataset: &OrdinalDataset) -> OrdinalPriors {
    ordinal_priors_with(dataset, &OrdinalPriorConfig::default()).expect("default prior constants are valid")
}

pub fn ordinal_priors_with(dataset: &OrdinalDataset, cfg: &OrdinalPriorConfig) -> Result<OrdinalPriors, OrdinalError> {
    let k = dataset.levels as f64;
    let group = GroupPrior {
        mu: Prior::normal((1.0 + k) / 2.0, cfg.mu_sd_per_level * k)?,
        tau: Prior::uniform(cfg.tau_lo_per_level * k, cfg.tau_hi_per_level * k)?,
        nu: cfg.nu,
    };
    cfg.nu.validate()?;
    if cfg.tau_lo_per_level <= 0.0 {
        return Err(StatError::Domain {
            name: "tau_lo_per_level",
            value: cfg.tau_lo_per_level,
            reason: "must be positive",
        }
        .into());
    }
    let theta_sd = cfg.theta_sd_per_level * k;
    Prior::normal(0.0, theta_sd)?;
    Ok(OrdinalPriors {
        groups: vec![group; dataset.groups.len()],
        theta_sd,
    })
}

/// Which model quantity a flat parameter index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrdinalParam {
    Mu(usize),
    Tau(usize),
    Nu(usize),
    /// (item, k) with k in 1..K
    Theta(usize, usize),
}

/// The ordinal model as a sampler target.
///
/// Parameter layout: `mu[g], tau[g], nu[g]` for each group, then the K − 1
/// thresholds of each item in scale order. The two anchors stay in the
/// vector as fixed parameters.
#[derive(Debug, Clone)]
pub struct OrdinalModel {
    levels: usize,
    group_names: Vec<String>,
    item_ids: Vec<String>,
    counts: LevelCounts,
    priors: OrdinalPriors,
    init_latents: Vec<(f64, f64)>,
}

impl OrdinalModel {
    pub fn new(dataset: &OrdinalDataset, priors: OrdinalPriors) -> Result<Self, OrdinalError> {
        dataset.validate()?;
        if priors.groups.len() != dataset.groups.len() {
            return Err(OrdinalError::ThresholdShape(format!(
                "{} group priors for {} groups",
                priors.groups.len(),
                dataset.groups.len()
            )));
        }
        for g in &priors.groups {
            g.mu.validate()?;
            g.tau.validate()?;
            g.nu.validate()?;
        }
        let counts = dataset.counts();
        let init_latents = (0..dataset.groups.len())
            .map(|g| {
                let levels: Vec<f64> = dataset
                    .responses
                    .iter()
                    .filter(|r| r.group == g)
                    .map(|r| r.level as f64)
                    .collect();
                if levels.len() < 2 {
                    return ((1.0 + dataset.levels as f64) / 2.0, 1.0);
                }
                let n = levels.len() as f64;
                let m = levels.iter().sum::<f64>() / n;
                let sd = (levels.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                (m, sd.max(0.5))
            })
            .collect();
        Ok(Self {
            levels: dataset.levels,
            group_names: dataset.groups.clone(),
            item_ids: dataset.items.iter().map(|i| i.id.clone()).collect(),
            counts,
            priors,
            init_latents,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_params(&self) -> usize {
        3 * self.n_groups() + self.n_items() * (self.levels - 1)
    }

    pub fn priors(&self) -> &OrdinalPriors {
        &self.priors
    }

    pub fn mu_index(&self, g: usize) -> usize {
        3 * g
    }

    pub fn tau_index(&self, g: usize) -> usize {
        3 * g + 1
    }

    pub fn nu_index(&self, g: usize) -> usize {
        3 * g + 2
    }

    pub fn theta_index(&self, item: usize, k: usize) -> usize {
        3 * self.n_groups() + item * (self.levels - 1) + (k - 1)
    }

    pub fn param_at(&self, index: usize) -> OrdinalParam {
        let latent = 3 * self.n_groups();
        if index < latent {
            match index % 3 {
                0 => OrdinalParam::Mu(index / 3),
                1 => OrdinalParam::Tau(index / 3),
                _ => OrdinalParam::Nu(index / 3),
            }
        } else {
            let j = index - latent;
            OrdinalParam::Theta(j / (self.levels - 1), j % (self.levels - 1) + 1)
        }
    }

    pub fn is_anchor(&self, item: usize, k: usize) -> bool {
        item == 0 && (k == 1 || k == self.levels - 1)
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.n_params())
            .map(|j| match self.param_at(j) {
                OrdinalParam::Mu(g) => format!("mu[{}]", self.group_names[g]),
                OrdinalParam::Tau(g) => format!("tau[{}]", self.group_names[g]),
                OrdinalParam::Nu(g) => format!("nu[{}]", self.group_names[g]),
                OrdinalParam::Theta(i, k) => format!("theta[{}][{k}]", self.item_ids[i]),
            })
            .collect()
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let names = self.param_names();
        (0..self.n_params())
            .map(|j| {
                let name = names[j].clone();
                match self.param_at(j) {
                    OrdinalParam::Mu(g) => ParamSpec::free(name, self.init_latents[g].0).with_step(0.1),
                    OrdinalParam::Tau(g) => {
                        let (lo, hi) = self.priors.groups[g].tau.support();
                        let init = self.init_latents[g].1.clamp(lo * 1.01, hi * 0.99);
                        ParamSpec::free(name, init).bounded(lo, hi).with_step(0.1)
                    }
                    OrdinalParam::Nu(g) => {
                        let nu = self.priors.groups[g].nu;
                        ParamSpec::free(name, nu.mean.max(2.0 * nu.lower_bound()))
                            .bounded(nu.lower_bound(), f64::INFINITY)
                            .log_scale()
                            .with_step(0.5)
                    }
                    OrdinalParam::Theta(i, k) => {
                        let v = k as f64 + 0.5;
                        if self.is_anchor(i, k) {
                            ParamSpec::fixed(name, v)
                        } else {
                            ParamSpec::free(name, v).with_step(0.1)
                        }
                    }
                }
            })
            .collect()
    }

    /// Same layout as [`OrdinalModel::param_specs`], with ν of every group
    /// held at `nu`.
    pub fn param_specs_fixed_nu(&self, nu: f64) -> Vec<ParamSpec> {
        let mut specs = self.param_specs();
        for g in 0..self.n_groups() {
            let j = self.nu_index(g);
            specs[j] = ParamSpec::fixed(specs[j].name.clone(), nu);
        }
        specs
    }

    fn latent(&self, x: &[f64], g: usize) -> TDistParams {
        TDistParams {
            mu: x[self.mu_index(g)],
            tau: x[self.tau_index(g)],
            nu: x[self.nu_index(g)],
        }
    }

    fn thresholds<'a>(&self, x: &'a [f64], item: usize) -> &'a [f64] {
        let start = self.theta_index(item, 1);
        &x[start..start + self.levels - 1]
    }

    fn group_prior(&self, x: &[f64], g: usize) -> f64 {
        let p = &self.priors.groups[g];
        p.mu.ln_density(x[self.mu_index(g)]) + p.tau.ln_density(x[self.tau_index(g)]) + p.nu.ln_density(x[self.nu_index(g)])
    }

    fn theta_prior(&self, x: &[f64], item: usize, k: usize) -> f64 {
        if self.is_anchor(item, k) {
            0.0
        } else {
            self.priors.theta_prior(k).ln_density(x[self.theta_index(item, k)])
        }
    }

    fn student(&self, x: &[f64], g: usize) -> Option<StudentT> {
        StudentT::new(self.latent(x, g)).ok()
    }

    pub fn group_latents(&self, x: &[f64]) -> GroupLatents {
        GroupLatents {
            groups: (0..self.n_groups()).map(|g| self.latent(x, g)).collect(),
        }
    }

    pub fn threshold_set(&self, x: &[f64]) -> ThresholdSet {
        ThresholdSet {
            levels: self.levels,
            values: (0..self.n_items()).map(|i| self.thresholds(x, i).to_vec()).collect(),
        }
    }
}

impl LogDensity for OrdinalModel {
    fn log_density(&self, x: &[f64]) -> f64 {
        let mut lp = 0.0;
        for g in 0..self.n_groups() {
            lp += self.group_prior(x, g);
        }
        for i in 0..self.n_items() {
            for k in 1..self.levels {
                lp += self.theta_prior(x, i, k);
            }
        }
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        for g in 0..self.n_groups() {
            let Some(t) = self.student(x, g) else {
                return f64::NEG_INFINITY;
            };
            for i in 0..self.n_items() {
                lp += cell_log_likelihood(&t, self.thresholds(x, i), self.counts.cell(g, i));
                if lp == f64::NEG_INFINITY {
                    return lp;
                }
            }
        }
        lp
    }

    fn has_conditionals(&self) -> bool {
        true
    }

    fn log_conditional(&self, x: &[f64], index: usize) -> f64 {
        match self.param_at(index) {
            OrdinalParam::Mu(g) | OrdinalParam::Tau(g) | OrdinalParam::Nu(g) => {
                let mut lp = self.group_prior(x, g);
                if !lp.is_finite() {
                    return f64::NEG_INFINITY;
                }
                let Some(t) = self.student(x, g) else {
                    return f64::NEG_INFINITY;
                };
                for i in 0..self.n_items() {
                    lp += cell_log_likelihood(&t, self.thresholds(x, i), self.counts.cell(g, i));
                    if lp == f64::NEG_INFINITY {
                        break;
                    }
                }
                lp
            }
            OrdinalParam::Theta(i, k) => {
                let th = self.thresholds(x, i);
                if !strictly_ascending(th) {
                    return f64::NEG_INFINITY;
                }
                let mut lp = self.theta_prior(x, i, k);
                for g in 0..self.n_groups() {
                    let Some(t) = self.student(x, g) else {
                        return f64::NEG_INFINITY;
                    };
                    lp += cell_log_likelihood(&t, th, self.counts.cell(g, i));
                    if lp == f64::NEG_INFINITY {
                        break;
                    }
                }
                lp
            }
        }
    }

    fn explain(&self, x: &[f64]) -> Option<String> {
        for g in 0..self.n_groups() {
            let (lo, hi) = self.priors.groups[g].tau.support();
            let tau = x[self.tau_index(g)];
            if !(tau >= lo && tau <= hi) {
                return Some(format!("tau[{}] = {tau} outside prior support [{lo}, {hi}]", self.group_names[g]));
            }
        }
        for i in 0..self.n_items() {
            if !strictly_ascending(self.thresholds(x, i)) {
                return Some(format!("thresholds of item {} are not ascending", self.item_ids[i]));
            }
        }
        for g in 0..self.n_groups() {
            let t = self.student(x, g)?;
            for i in 0..self.n_items() {
                if cell_log_likelihood(&t, self.thresholds(x, i), self.counts.cell(g, i)) == f64::NEG_INFINITY {
                    return Some(format!(
                        "observed level of item {} in group {} has zero probability",
                        self.item_ids[i], self.group_names[g]
                    ));
                }
            }
        }
        None
    }
}

/// Known parameters of the generative model, for simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalTruth {
    pub levels: usize,
    pub groups: Vec<String>,
    pub latents: GroupLatents,
    pub items: Vec<Item>,
    pub thresholds: ThresholdSet,
}

impl OrdinalTruth {
    pub fn validate(&self) -> Result<(), OrdinalError> {
        if self.levels < 3 {
            return Err(OrdinalError::TooFewLevels(self.levels));
        }
        if self.groups.is_empty() || self.items.is_empty() {
            return Err(OrdinalError::Empty);
        }
        if self.latents.groups.len() != self.groups.len() {
            return Err(OrdinalError::ThresholdShape("one latent triple per group required".into()));
        }
        for p in &self.latents.groups {
            p.validate()?;
        }
        self.thresholds.check_shape(self.items.len(), self.levels)?;
        if !self.thresholds.is_strictly_ascending() {
            return Err(OrdinalError::ThresholdShape("thresholds must be strictly ascending".into()));
        }
        Ok(())
    }
}

/// Every participant of every group answers every item once; answers are
/// categorical draws from the model's level probabilities.
pub fn simulate_responses<R: Rng + ?Sized>(
    truth: &OrdinalTruth,
    participants_per_group: usize,
    rng: &mut R,
) -> Result<OrdinalDataset, OrdinalError> {
    truth.validate()?;
    let mut responses = Vec::with_capacity(truth.groups.len() * truth.items.len() * participants_per_group);
    for (g, p) in truth.latents.groups.iter().enumerate() {
        let t = StudentT::new(*p)?;
        let dists: Vec<WeightedIndex<f64>> = truth
            .thresholds
            .values
            .iter()
            .map(|th| {
                let probs = level_probabilities_with(&t, th).probs;
                WeightedIndex::new(probs.iter().map(|&q| q.max(0.0))).expect("valid level probabilities")
            })
            .collect();
        for j in 0..participants_per_group {
            let participant = format!("{}-{}", truth.groups[g], j + 1);
            for (i, d) in dists.iter().enumerate() {
                responses.push(Response {
                    participant: participant.clone(),
                    group: g,
                    item: i,
                    level: d.sample(rng) + 1,
                    synthetic: false,
                });
            }
        }
    }
    OrdinalDataset::new(truth.levels, truth.groups.clone(), truth.items.clone(), responses)
}

/// Latent draws from t(μ, τ, ν), used to check simulated data.
pub fn sample_latent<R: Rng + ?Sized>(p: &TDistParams, n: usize, rng: &mut R) -> Result<Vec<f64>, OrdinalError> {
    p.validate()?;
    let t = StudentTSampler::new(p.nu).map_err(|_| StatError::Domain {
        name: "nu",
        value: p.nu,
        reason: "rejected by sampler",
    })?;
    Ok((0..n).map(|_| p.mu + p.tau * t.sample(rng)).collect())
}
