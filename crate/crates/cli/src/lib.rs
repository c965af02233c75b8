//! Command-line front end: configuration, data ingestion, the analysis
//! pipeline, reports and plot data, and data simulation.

pub mod analysis;
pub mod config;
pub mod error;
pub mod ingest;
pub mod report;
pub mod simulate;

pub use analysis::{run_analysis, AnalysisOutcome};
pub use config::{AnalysisConfig, ConfigFile, ModelKind};
pub use error::CliError;
pub use report::AnalysisReport;
