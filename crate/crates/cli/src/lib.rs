//! Experiment runner behind the `fracheat` binary.

pub mod config;
pub mod experiments;
pub mod output;
pub mod report;

pub use config::{normalize, parse_config, ConfigError, Experiment, ExperimentConfig};
pub use output::{run_experiment, RunOutcome};
pub use report::{emit_report, CriterionResult, Status};
