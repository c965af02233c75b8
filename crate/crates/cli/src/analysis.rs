//! The analysis pipeline: ingest, pad, build priors, sample, summarize,
//! decide, write.

use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use latent_t::inference::{effect_size_metric, effect_size_two_group};
use latent_t::mcmc::{run_chains, PosteriorChains};
use latent_t::metric::{priors_with, MetricModel};
use latent_t::ordinal::{ordinal_priors_with, pad_empty_levels, OrdinalModel};
use log::info;

use crate::config::{AnalysisConfig, ModelKind};
use crate::error::CliError;
use crate::ingest::{ingest_metric_csv, ingest_ordinal_csv, MetricIngest, OrdinalIngest, ScaleDefinition};
use crate::report::{
    append_column, plot_file_name, plots_for, status_label, summarize_chains, write_json, AnalysisReport, Provenance, Software,
    SCHEMA_VERSION,
};

/// Name of the standardized effect-size column.
pub const EFFECT_SIZE: &str = "effect_size";
/// Name of the raw latent mean difference column (ordinal, two groups).
pub const MU_DIFF: &str = "mu_diff";
pub const REPORT_FILE: &str = "report.json";
pub const DRAWS_FILE: &str = "draws.csv";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone)]
pub struct AnalysisOutcome {
    pub report: AnalysisReport,
    /// Sampled parameters followed by the derived columns.
    pub chains: PosteriorChains,
}

impl AnalysisOutcome {
    pub fn converged(&self) -> bool {
        self.report.diagnostics.converged
    }
}

fn analysis_err(e: impl std::fmt::Display) -> CliError {
    CliError::Analysis(e.to_string())
}

fn settings_json(cfg: &AnalysisConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn not_found(requested: &[String], excluded: &[String]) -> Vec<String> {
    requested.iter().filter(|id| !excluded.contains(id)).cloned().collect()
}

/// Metric analysis of paired differences; the ROPE decision is made on the
/// effect size (μ − μ₀)/τ.
pub fn analyze_metric(input: &MetricIngest, cfg: &AnalysisConfig) -> Result<AnalysisOutcome, CliError> {
    let data = input.dataset.clone();
    let priors = priors_with(&data.differences, &cfg.metric_priors).map_err(|e| CliError::Input(e.to_string()))?;
    let mut model = MetricModel::new(data.clone(), priors).map_err(|e| CliError::Input(e.to_string()))?;
    if let Some(nu) = cfg.fix_nu {
        model = model.with_fixed_nu(nu);
    }
    info!("sampling metric model on {} differences", data.len());
    let mut chains = run_chains(&model, &model.param_specs(), &cfg.chains).map_err(analysis_err)?;
    let mu = chains.traces("mu").map_err(analysis_err)?;
    let tau = chains.traces("tau").map_err(analysis_err)?;
    let d: Vec<Vec<f64>> = mu
        .iter()
        .zip(&tau)
        .map(|(m, t)| effect_size_metric(m, t, cfg.mu0))
        .collect::<Result<_, _>>()
        .map_err(analysis_err)?;
    append_column(&mut chains, EFFECT_SIZE, &d);

    let (quantities, diagnostics) = summarize_chains(&chains, &[EFFECT_SIZE], &[EFFECT_SIZE], cfg.rope, cfg.hdi_mass)?;
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        model: ModelKind::Metric.to_string(),
        status: status_label(diagnostics.converged).to_string(),
        diagnostics,
        quantities,
        provenance: Provenance {
            software: Software::default(),
            settings: settings_json(cfg),
            priors: serde_json::to_value(priors).expect("priors serialize"),
            chain_seeds: chains.chain_seeds.clone(),
            n_observations: data.len(),
            excluded: input.excluded.clone(),
            exclusions_not_found: not_found(&cfg.exclude, &input.excluded),
            padding_log: Vec::new(),
            compressed_levels: Vec::new(),
            groups: Vec::new(),
        },
    };
    Ok(AnalysisOutcome { report, chains })
}

/// Ordinal analysis with separate latents per group. With two or more
/// groups the effect size compares the treatment group with the reference
/// group (by default the second and the first group seen).
pub fn analyze_ordinal(input: &OrdinalIngest, cfg: &AnalysisConfig) -> Result<AnalysisOutcome, CliError> {
    let padded = pad_empty_levels(&input.dataset, cfg.padding).map_err(|e| CliError::Input(e.to_string()))?;
    for a in &padded.padding_log {
        info!("padding: +{} at level {} of item {} in group {}", a.count_added, a.level, a.item, a.group);
    }
    let priors = ordinal_priors_with(&padded, &cfg.ordinal_priors).map_err(|e| CliError::Input(e.to_string()))?;
    let model = OrdinalModel::new(&padded, priors.clone()).map_err(|e| CliError::Input(e.to_string()))?;
    let specs = match cfg.fix_nu {
        Some(nu) => model.param_specs_fixed_nu(nu),
        None => model.param_specs(),
    };
    info!(
        "sampling ordinal model: {} groups, {} items, {} levels, {} answers",
        model.n_groups(),
        model.n_items(),
        model.levels(),
        padded.responses.len()
    );
    let mut chains = run_chains(&model, &specs, &cfg.chains).map_err(analysis_err)?;

    let mut derived: Vec<&str> = Vec::new();
    let pair = group_pair(&padded.groups, cfg)?;
    if let Some((a, b)) = pair {
        let t = |p: &str, g: usize| chains.traces(&format!("{p}[{}]", padded.groups[g])).map_err(analysis_err);
        let (mu_a, mu_b, tau_a, tau_b) = (t("mu", a)?, t("mu", b)?, t("tau", a)?, t("tau", b)?);
        let diff: Vec<Vec<f64>> = mu_a.iter().zip(&mu_b).map(|(x, y)| y.iter().zip(x).map(|(b, a)| b - a).collect()).collect();
        let d: Vec<Vec<f64>> = (0..mu_a.len())
            .map(|c| effect_size_two_group(&mu_a[c], &mu_b[c], &tau_a[c], &tau_b[c]))
            .collect::<Result<_, _>>()
            .map_err(analysis_err)?;
        append_column(&mut chains, MU_DIFF, &diff);
        append_column(&mut chains, EFFECT_SIZE, &d);
        derived = vec![MU_DIFF, EFFECT_SIZE];
    }
    let rope_on: &[&str] = if pair.is_some() { &[EFFECT_SIZE] } else { &[] };
    let (quantities, diagnostics) = summarize_chains(&chains, &derived, rope_on, cfg.rope, cfg.hdi_mass)?;
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        model: ModelKind::Ordinal.to_string(),
        status: status_label(diagnostics.converged).to_string(),
        diagnostics,
        quantities,
        provenance: Provenance {
            software: Software::default(),
            settings: settings_json(cfg),
            priors: serde_json::to_value(&priors).expect("priors serialize"),
            chain_seeds: chains.chain_seeds.clone(),
            n_observations: padded.responses.iter().filter(|r| !r.synthetic).count(),
            excluded: input.excluded.clone(),
            exclusions_not_found: not_found(&cfg.exclude, &input.excluded),
            padding_log: padded.padding_log.clone(),
            compressed_levels: padded.compressed_levels.clone(),
            groups: padded.groups.clone(),
        },
    };
    Ok(AnalysisOutcome { report, chains })
}

/// (reference, treatment) group indices, if an effect size applies.
fn group_pair(groups: &[String], cfg: &AnalysisConfig) -> Result<Option<(usize, usize)>, CliError> {
    let find = |name: &String| {
        groups
            .iter()
            .position(|g| g == name)
            .ok_or_else(|| CliError::Input(format!("group `{name}` does not occur in the data")))
    };
    let a = match &cfg.reference_group {
        Some(n) => Some(find(n)?),
        None => None,
    };
    let b = match &cfg.treatment_group {
        Some(n) => Some(find(n)?),
        None => None,
    };
    if groups.len() < 2 {
        if a.is_some() || b.is_some() {
            return Err(CliError::Input("a group comparison needs at least two groups".into()));
        }
        return Ok(None);
    }
    let a = a.unwrap_or_else(|| if b == Some(0) { 1 } else { 0 });
    let b = b.unwrap_or_else(|| (0..groups.len()).find(|&g| g != a).expect("two groups"));
    if a == b {
        return Err(CliError::Input("reference and treatment group are the same".into()));
    }
    Ok(Some((a, b)))
}

/// Exclusive use of an output directory for the lifetime of the guard.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
    _file: File,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(file) => Ok(Self { path, _file: file }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Busy(dir.to_path_buf())),
            Err(e) => Err(CliError::io(format!("creating {}", path.display()), e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Write the report, plot data and (optionally) the draw dump.
pub fn write_outputs(outcome: &AnalysisOutcome, dir: &Path, dump_draws: bool) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let report_path = dir.join(REPORT_FILE);
    write_json(&report_path, &outcome.report)?;
    written.push(report_path);
    for plot in plots_for(&outcome.chains, &outcome.report.quantities) {
        let path = dir.join(plot_file_name(&plot.quantity));
        write_json(&path, &plot)?;
        written.push(path);
    }
    if dump_draws {
        let path = dir.join(DRAWS_FILE);
        let file = File::create(&path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
        outcome
            .chains
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| CliError::Analysis(e.to_string()))?;
        written.push(path);
    }
    Ok(written)
}

/// Ingest, analyze and write everything into the configured output
/// directory, holding its lock throughout.
pub fn run_analysis(cfg: &AnalysisConfig) -> Result<AnalysisOutcome, CliError> {
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let outcome = match cfg.model {
        ModelKind::Metric => {
            let input = ingest_metric_csv(&cfg.data, &cfg.exclude)?;
            analyze_metric(&input, cfg)?
        }
        ModelKind::Ordinal => {
            let scale_path = cfg.scale.as_ref().expect("resolved ordinal config has a scale");
            let scale = ScaleDefinition::load(scale_path)?;
            let input = ingest_ordinal_csv(&cfg.data, &scale, &cfg.exclude)?;
            analyze_ordinal(&input, cfg)?
        }
    };
    let written = write_outputs(&outcome, &cfg.output_dir, cfg.dump_draws)?;
    for p in &written {
        info!("wrote {}", p.display());
    }
    Ok(outcome)
}
