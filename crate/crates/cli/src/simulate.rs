//! Synthetic datasets drawn from the generative models, written in the same
//! formats the analyses read.

use std::path::{Path, PathBuf};

use latent_t::metric::simulate_differences;
use latent_t::ordinal::{apply_reverse_scale, simulate_responses, OrdinalDataset, OrdinalTruth};
use latent_t::statfn::TDistParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::ingest::ScaleDefinition;
use crate::report::write_json;

pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTruth {
    pub mu: f64,
    pub tau: f64,
    pub nu: f64,
    /// Value of condition b; condition a is baseline + difference.
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum TruthFile {
    Metric {
        truth: MetricTruth,
        participants: usize,
        seed: u64,
    },
    Ordinal {
        truth: OrdinalTruth,
        participants_per_group: usize,
        seed: u64,
    },
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Rows of a metric data file, header included.
pub fn metric_csv(truth: &MetricTruth, n: usize, seed: u64) -> Result<String, CliError> {
    let params = TDistParams::new(truth.mu, truth.tau, truth.nu).map_err(|e| CliError::Input(e.to_string()))?;
    if !truth.baseline.is_finite() {
        return Err(CliError::Input("baseline must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diffs = simulate_differences(&params, n, &mut rng).map_err(|e| CliError::Input(e.to_string()))?;
    let mut out = String::from("participant,condition_a,condition_b\n");
    for (i, d) in diffs.iter().enumerate() {
        out.push_str(&format!("p{},{},{}\n", i + 1, truth.baseline + d, truth.baseline));
    }
    Ok(out)
}

pub fn simulate_metric(truth: &MetricTruth, n: usize, seed: u64, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if n < 2 {
        return Err(CliError::Input("need at least 2 participants".into()));
    }
    let csv = metric_csv(truth, n, seed)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let data = dir.join("data.csv");
    write_text(&data, &csv)?;
    let truth_path = dir.join(TRUTH_FILE);
    write_json(
        &truth_path,
        &TruthFile::Metric {
            truth: truth.clone(),
            participants: n,
            seed,
        },
    )?;
    Ok(vec![data, truth_path])
}

/// Simulated answers, with reverse-scored items written as the participant
/// would have ticked them.
pub fn ordinal_dataset(truth: &OrdinalTruth, per_group: usize, seed: u64) -> Result<OrdinalDataset, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_responses(truth, per_group, &mut rng).map_err(|e| CliError::Input(e.to_string()))
}

pub fn ordinal_csv(dataset: &OrdinalDataset) -> Result<String, CliError> {
    let mut out = String::from("participant,group,item_id,level\n");
    for r in &dataset.responses {
        let item = &dataset.items[r.item];
        let raw = if item.reverse {
            apply_reverse_scale(r.level, dataset.levels).map_err(|e| CliError::Input(e.to_string()))?
        } else {
            r.level
        };
        out.push_str(&format!("{},{},{},{raw}\n", r.participant, dataset.groups[r.group], item.id));
    }
    Ok(out)
}

pub fn simulate_ordinal(truth: &OrdinalTruth, per_group: usize, seed: u64, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if per_group == 0 {
        return Err(CliError::Input("need at least 1 participant per group".into()));
    }
    let dataset = ordinal_dataset(truth, per_group, seed)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let responses = dir.join("responses.csv");
    write_text(&responses, &ordinal_csv(&dataset)?)?;
    let scale = dir.join("scale.yaml");
    let def = ScaleDefinition {
        name: None,
        levels: truth.levels,
        items: truth.items.clone(),
    };
    write_text(&scale, &def.to_yaml())?;
    let truth_path = dir.join(TRUTH_FILE);
    write_json(
        &truth_path,
        &TruthFile::Ordinal {
            truth: truth.clone(),
            participants_per_group: per_group,
            seed,
        },
    )?;
    Ok(vec![responses, scale, truth_path])
}
