//! Analysis configuration: a flat TOML file with a required format version.
//!
//! ```toml
//! format_version = 1
//! model = "ordinal"
//! data = "responses.csv"
//! scale = "acceptance.yaml"
//! exclude = ["p4", "p9", "p10", "p22"]
//! seed = 7
//! ```
//!
//! Unknown keys are rejected. Relative paths are resolved against the
//! directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use latent_t::inference::Rope;
use latent_t::mcmc::ChainConfig;
use latent_t::metric::PriorWidths;
use latent_t::ordinal::{OrdinalPriorConfig, PaddingStrategy};
use latent_t::statfn::NuPrior;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "LATENT_T_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "latent-t-out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config format_version {found} is not supported (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("invalid setting `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("{what} file not found: {path}")]
    MissingFile { what: &'static str, path: PathBuf },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Metric,
    Ordinal,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Metric => "metric",
            ModelKind::Ordinal => "ordinal",
        })
    }
}

/// The file as written by the user; every key except the version is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub format_version: u32,
    pub model: Option<ModelKind>,
    pub data: Option<PathBuf>,
    pub scale: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub exclude: Option<Vec<String>>,
    pub rope_lo: Option<f64>,
    pub rope_hi: Option<f64>,
    pub hdi_mass: Option<f64>,
    pub padding: Option<String>,
    pub dump_draws: Option<bool>,

    pub chains: Option<usize>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub adapt_window: Option<usize>,
    pub target_accept: Option<f64>,

    /// Metric: null value of μ for the effect size.
    pub mu0: Option<f64>,
    /// Ordinal: groups compared by the effect size (reference, treatment).
    pub reference_group: Option<String>,
    pub treatment_group: Option<String>,
    /// Hold ν at this value instead of sampling it.
    pub fix_nu: Option<f64>,

    pub nu_mean: Option<f64>,
    pub nu_shift: Option<f64>,
    pub nu_floor: Option<f64>,
    pub mu_sd_factor: Option<f64>,
    pub tau_lo_divisor: Option<f64>,
    pub tau_hi_factor: Option<f64>,
    pub mu_sd_per_level: Option<f64>,
    pub tau_lo_per_level: Option<f64>,
    pub tau_hi_per_level: Option<f64>,
    pub theta_sd_per_level: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if file.format_version != FORMAT_VERSION {
            return Err(ConfigError::Version {
                found: file.format_version,
            });
        }
        Ok(file)
    }

    /// Read a config file and make its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut file = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut file.data, &mut file.scale, &mut file.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }

    pub fn empty() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            ..Self::default()
        }
    }
}

/// Fully resolved settings for one analysis run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub model: ModelKind,
    pub data: PathBuf,
    pub scale: Option<PathBuf>,
    /// Not part of the report, so the same analysis written elsewhere
    /// produces the same bytes.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub exclude: Vec<String>,
    pub rope: Rope,
    pub hdi_mass: f64,
    pub padding: PaddingStrategy,
    pub dump_draws: bool,
    pub chains: ChainConfig,
    pub mu0: f64,
    pub reference_group: Option<String>,
    pub treatment_group: Option<String>,
    pub fix_nu: Option<f64>,
    pub metric_priors: PriorWidths,
    pub ordinal_priors: OrdinalPriorConfig,
}

impl AnalysisConfig {
    /// Resolve a config file for `model`. `env_output_dir` stands in for the
    /// output-directory environment variable.
    pub fn resolve(file: &ConfigFile, model: ModelKind, env_output_dir: Option<PathBuf>) -> Result<Self, ConfigError> {
        if let Some(m) = file.model {
            if m != model {
                return Err(invalid("model", format!("config is for a {m} analysis, not {model}")));
            }
        }
        let data = file.data.clone().ok_or_else(|| invalid("data", "no data file given"))?;
        if !data.is_file() {
            return Err(ConfigError::MissingFile { what: "data", path: data });
        }
        let scale = match model {
            ModelKind::Ordinal => {
                let s = file.scale.clone().ok_or_else(|| invalid("scale", "ordinal analyses need a scale definition"))?;
                if !s.is_file() {
                    return Err(ConfigError::MissingFile { what: "scale", path: s });
                }
                Some(s)
            }
            ModelKind::Metric => {
                if file.scale.is_some() {
                    return Err(invalid("scale", "only used by ordinal analyses"));
                }
                None
            }
        };
        let output_dir = file
            .output_dir
            .clone()
            .or(env_output_dir)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));

        let defaults = Rope::default();
        let rope = Rope::new(file.rope_lo.unwrap_or(defaults.lo), file.rope_hi.unwrap_or(defaults.hi))
            .map_err(|e| invalid("rope_lo/rope_hi", e.to_string()))?;
        let hdi_mass = file.hdi_mass.unwrap_or(0.95);
        if !(hdi_mass > 0.0 && hdi_mass < 1.0) {
            return Err(invalid("hdi_mass", "must lie in (0, 1)"));
        }
        let padding = match &file.padding {
            Some(s) => PaddingStrategy::from_str(s).map_err(|e| invalid("padding", e.to_string()))?,
            None => PaddingStrategy::default(),
        };
        if model == ModelKind::Metric && file.padding.is_some() {
            return Err(invalid("padding", "only used by ordinal analyses"));
        }

        let d = ChainConfig::default();
        let iterations = file.iterations.unwrap_or(d.iterations);
        let chains = ChainConfig {
            n_chains: file.chains.unwrap_or(d.n_chains),
            iterations,
            burn_in: file.burn_in.unwrap_or(d.burn_in.min(iterations / 2)),
            thin: file.thin.unwrap_or(d.thin),
            master_seed: file.seed.unwrap_or(d.master_seed),
            adapt_window: file.adapt_window.unwrap_or(d.adapt_window),
            target_accept: file.target_accept.unwrap_or(d.target_accept),
        };
        chains.validate().map_err(|e| invalid("chains/iterations/burn_in/thin", e.to_string()))?;

        let dn = NuPrior::default();
        let nu = NuPrior::new(
            file.nu_mean.unwrap_or(dn.mean),
            file.nu_shift.unwrap_or(dn.shift),
            file.nu_floor.unwrap_or(dn.floor),
        )
        .map_err(|e| invalid("nu_mean/nu_shift/nu_floor", e.to_string()))?;
        if let Some(v) = file.fix_nu {
            if !(v.is_finite() && v > nu.lower_bound()) {
                return Err(invalid("fix_nu", format!("must be finite and above {}", nu.lower_bound())));
            }
        }

        let metric_only = [
            ("mu0", file.mu0.is_some()),
            ("mu_sd_factor", file.mu_sd_factor.is_some()),
            ("tau_lo_divisor", file.tau_lo_divisor.is_some()),
            ("tau_hi_factor", file.tau_hi_factor.is_some()),
        ];
        let ordinal_only = [
            ("reference_group", file.reference_group.is_some()),
            ("treatment_group", file.treatment_group.is_some()),
            ("mu_sd_per_level", file.mu_sd_per_level.is_some()),
            ("tau_lo_per_level", file.tau_lo_per_level.is_some()),
            ("tau_hi_per_level", file.tau_hi_per_level.is_some()),
            ("theta_sd_per_level", file.theta_sd_per_level.is_some()),
        ];
        let foreign = match model {
            ModelKind::Metric => &ordinal_only[..],
            ModelKind::Ordinal => &metric_only[..],
        };
        if let Some((key, _)) = foreign.iter().find(|(_, set)| *set) {
            return Err(invalid(key, format!("not used by {model} analyses")));
        }

        let dm = PriorWidths::default();
        let metric_priors = PriorWidths {
            mu_sd_factor: positive("mu_sd_factor", file.mu_sd_factor.unwrap_or(dm.mu_sd_factor))?,
            tau_lo_divisor: positive("tau_lo_divisor", file.tau_lo_divisor.unwrap_or(dm.tau_lo_divisor))?,
            tau_hi_factor: positive("tau_hi_factor", file.tau_hi_factor.unwrap_or(dm.tau_hi_factor))?,
            nu,
        };
        let dord = OrdinalPriorConfig::default();
        let ordinal_priors = OrdinalPriorConfig {
            mu_sd_per_level: positive("mu_sd_per_level", file.mu_sd_per_level.unwrap_or(dord.mu_sd_per_level))?,
            tau_lo_per_level: positive("tau_lo_per_level", file.tau_lo_per_level.unwrap_or(dord.tau_lo_per_level))?,
            tau_hi_per_level: positive("tau_hi_per_level", file.tau_hi_per_level.unwrap_or(dord.tau_hi_per_level))?,
            nu,
            theta_sd_per_level: positive("theta_sd_per_level", file.theta_sd_per_level.unwrap_or(dord.theta_sd_per_level))?,
        };
        if ordinal_priors.tau_lo_per_level >= ordinal_priors.tau_hi_per_level {
            return Err(invalid("tau_lo_per_level", "must be below tau_hi_per_level"));
        }
        let mu0 = file.mu0.unwrap_or(0.0);
        if !mu0.is_finite() {
            return Err(invalid("mu0", "must be finite"));
        }

        Ok(Self {
            model,
            data,
            scale,
            output_dir,
            exclude: file.exclude.clone().unwrap_or_default(),
            rope,
            hdi_mass,
            padding,
            dump_draws: file.dump_draws.unwrap_or(true),
            chains,
            mu0,
            reference_group: file.reference_group.clone(),
            treatment_group: file.treatment_group.clone(),
            fix_nu: file.fix_nu,
            metric_priors,
            ordinal_priors,
        })
    }
}

fn positive(key: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be finite and positive, got {v}")))
    }
}
