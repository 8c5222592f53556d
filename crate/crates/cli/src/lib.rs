//! Config-driven front end: parse an experiment document, run it, write CSVs.

pub mod config;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind, GridSpec};
pub use run::{run, run_config, ExitCode, Overrides, RunError, RunReport};
