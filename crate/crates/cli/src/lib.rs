//! Experiment runner: JSON job configs in, CSV result tables out.

pub mod config;
pub mod jobs;
pub mod output;

pub use config::{validate_config, Case, ConfigError, ExperimentConfig, Job};
pub use jobs::{run, ResultRow, RunError, RunOptions};
pub use output::write_csv;

/// JSON schema for experiment configs.
pub const SCHEMA: &str = include_str!("../schema/config.schema.json");
