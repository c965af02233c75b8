//! Report and plot-data documents.
//!
//! Both are JSON with a schema version. They contain no timestamps or
//! absolute output paths, so reruns with the same inputs are byte-identical.

use std::path::Path;

use latent_t::inference::{histogram, rope_decision, summarize, PosteriorSummary, Rope, RopeDecision, Verdict};
use latent_t::mcmc::{ess_traces, rhat_traces, PosteriorChains};
use latent_t::ordinal::PaddingAction;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const RHAT_LIMIT: f64 = 1.05;
pub const ESS_MIN: f64 = 200.0;
pub const PLOT_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityReport {
    pub name: String,
    /// Sampled parameter, or a quantity computed from the draws.
    pub derived: bool,
    pub fixed: bool,
    pub summary: PosteriorSummary,
    pub rhat: Option<f64>,
    pub ess: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rope: Option<RopeDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub rhat_limit: f64,
    pub ess_min: f64,
    /// Free parameters that miss either limit.
    pub failing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

impl Default for Software {
    fn default() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub software: Software,
    /// The resolved analysis settings, every prior constant included.
    pub settings: serde_json::Value,
    /// The priors as built from the data.
    pub priors: serde_json::Value,
    pub chain_seeds: Vec<u64>,
    pub n_observations: usize,
    pub excluded: Vec<String>,
    /// Requested exclusions that matched no participant.
    pub exclusions_not_found: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub padding_log: Vec<PaddingAction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compressed_levels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub model: String,
    /// `converged` or `NON-CONVERGED`.
    pub status: String,
    pub diagnostics: Diagnostics,
    pub quantities: Vec<QuantityReport>,
    pub provenance: Provenance,
}

impl AnalysisReport {
    pub fn quantity(&self, name: &str) -> Option<&QuantityReport> {
        self.quantities.iter().find(|q| q.name == name)
    }
}

pub fn status_label(converged: bool) -> &'static str {
    if converged {
        "converged"
    } else {
        "NON-CONVERGED"
    }
}

/// Summaries of every column of `chains`. Columns named in `derived` are
/// excluded from the convergence verdict; columns in `rope_on` also get a
/// ROPE decision.
pub fn summarize_chains(
    chains: &PosteriorChains,
    derived: &[&str],
    rope_on: &[&str],
    rope: Rope,
    hdi_mass: f64,
) -> Result<(Vec<QuantityReport>, Diagnostics), CliError> {
    let mut quantities = Vec::with_capacity(chains.n_params());
    let mut failing = Vec::new();
    for (j, name) in chains.param_names.iter().enumerate() {
        let traces = chains.traces_at(j);
        let pooled = traces.concat();
        let summary = summarize(&pooled, hdi_mass).map_err(|e| CliError::Analysis(format!("{name}: {e}")))?;
        let rhat = rhat_traces(&traces);
        let ess = ess_traces(&traces);
        let is_derived = derived.contains(&name.as_str());
        let fixed = chains.fixed[j];
        if !fixed && !is_derived && (rhat.is_some_and(|r| r > RHAT_LIMIT) || ess < ESS_MIN) {
            failing.push(name.clone());
        }
        let rope = if rope_on.contains(&name.as_str()) {
            Some(rope_decision(&pooled, rope, hdi_mass).map_err(|e| CliError::Analysis(format!("{name}: {e}")))?)
        } else {
            None
        };
        quantities.push(QuantityReport {
            name: name.clone(),
            derived: is_derived,
            fixed,
            summary,
            rhat,
            ess,
            rope,
        });
    }
    let diagnostics = Diagnostics {
        converged: failing.is_empty(),
        rhat_limit: RHAT_LIMIT,
        ess_min: ESS_MIN,
        failing,
    };
    Ok((quantities, diagnostics))
}

/// Append a computed column, given as one trace per chain.
pub fn append_column(chains: &mut PosteriorChains, name: &str, traces: &[Vec<f64>]) {
    let p = chains.n_params();
    let n = chains.draws_per_chain();
    for (c, trace) in traces.iter().enumerate() {
        let old = std::mem::take(&mut chains.draws[c]);
        let mut new = Vec::with_capacity(n * (p + 1));
        for (i, row) in old.chunks(p).enumerate() {
            new.extend_from_slice(row);
            new.push(trace[i]);
        }
        chains.draws[c] = new;
    }
    chains.param_names.push(name.to_string());
    let first = traces[0][0];
    chains.fixed.push(traces.iter().flatten().all(|&v| v == first));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotHdi {
    pub mass: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRope {
    pub lo: f64,
    pub hi: f64,
    pub pct_below: f64,
    pub pct_inside: f64,
    pub pct_above: f64,
    pub verdict: Verdict,
}

/// Histogram of the posterior draws with the annotations of a
/// posterior plot: mean, median, mode, HDI and, when applicable, the ROPE
/// with the share of draws on either side of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub schema_version: u32,
    pub quantity: String,
    pub n_draws: usize,
    pub bins: Vec<Bin>,
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    /// How the mode was obtained.
    pub mode_method: String,
    pub hdi: PlotHdi,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rope: Option<PlotRope>,
}

pub fn plot_data(name: &str, draws: &[f64], summary: &PosteriorSummary, rope: Option<&RopeDecision>) -> PlotData {
    let (lo, hi) = draws
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let counts = histogram(draws, lo, hi, PLOT_BINS);
    let width = (hi - lo) / PLOT_BINS as f64;
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| Bin {
            lo: lo + i as f64 * width,
            hi: if i + 1 == PLOT_BINS { hi } else { lo + (i + 1) as f64 * width },
            count,
        })
        .collect();
    PlotData {
        schema_version: SCHEMA_VERSION,
        quantity: name.to_string(),
        n_draws: draws.len(),
        bins,
        mean: summary.mean,
        median: summary.median,
        mode: summary.mode,
        mode_method: format!("midpoint of the fullest of {} equal-width bins", latent_t::inference::MODE_BINS),
        hdi: PlotHdi {
            mass: summary.hdi_mass,
            lo: summary.hdi_lo,
            hi: summary.hdi_hi,
        },
        rope: rope.map(|r| PlotRope {
            lo: r.rope_lo,
            hi: r.rope_hi,
            pct_below: r.pct_below,
            pct_inside: r.pct_inside,
            pct_above: r.pct_above,
            verdict: r.verdict,
        }),
    }
}

/// File name for a quantity's plot data: `mu[EX]` becomes `plot_mu_EX.json`.
pub fn plot_file_name(quantity: &str) -> String {
    let mut s = String::with_capacity(quantity.len());
    for ch in quantity.chars() {
        if ch.is_ascii_alphanumeric() || ch == '-' {
            s.push(ch);
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    format!("plot_{}.json", s.trim_end_matches('_'))
}

/// Plot data for every non-fixed quantity.
pub fn plots_for(chains: &PosteriorChains, quantities: &[QuantityReport]) -> Vec<PlotData> {
    quantities
        .iter()
        .filter(|q| !q.fixed)
        .filter_map(|q| {
            let j = chains.index_of(&q.name).ok()?;
            Some(plot_data(&q.name, &chains.traces_at(j).concat(), &q.summary, q.rope.as_ref()))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Analysis(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Plain-text table of summaries and diagnostics.
pub fn render_table(quantities: &[QuantityReport]) -> String {
    let width = quantities.iter().map(|q| q.name.len()).max().unwrap_or(4).max(9);
    let mut out = format!(
        "{:<width$} {:>10} {:>10} {:>10} {:>10} {:>10} {:>7} {:>8}\n",
        "parameter", "mean", "median", "mode", "hdi_lo", "hdi_hi", "rhat", "ess"
    );
    for q in quantities {
        let rhat = q.rhat.map_or("-".to_string(), |r| format!("{r:.3}"));
        out.push_str(&format!(
            "{:<width$} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>7} {:>8.0}\n",
            q.name, q.summary.mean, q.summary.median, q.summary.mode, q.summary.hdi_lo, q.summary.hdi_hi, rhat, q.ess
        ));
        if let Some(r) = &q.rope {
            out.push_str(&format!(
                "{:<width$}   ROPE [{}, {}]: {:.1}% below, {:.1}% inside, {:.1}% above -> {:?}\n",
                "", r.rope_lo, r.rope_hi, r.pct_below, r.pct_inside, r.pct_above, r.verdict
            ));
        }
    }
    out
}
