//! Scenario configuration, the built-in catalogue, and deterministic
//! parallel replication with CSV/JSON output.

mod catalogue;
mod config;
mod output;
mod runner;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use catalogue::{default_config, list_scenarios, ScenarioId};
pub use config::{
    parse_config, CoefficientConfig, ConfigError, DensityConfig, DiagnosticsConfig, FamilyConfig, FieldSpec,
    MeasureConfig, ScenarioConfig, TripletConfig, MAX_REPLICAS,
};
pub use output::{run_scenario, write_outputs, write_samples_csv};
pub use runner::{simulate, tolerance, Diagnostics, ReplicaSample, RunOutput, RunSummary, VERSION};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),

    /// The configuration parsed but its objects could not be built.
    #[error("invalid scenario setup: {0}")]
    Setup(crate::error::Error),

    #[error("cannot start worker pool: {0}")]
    ThreadPool(String),

    #[error("I/O error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}
