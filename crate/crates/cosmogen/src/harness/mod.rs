//! Ensemble orchestration: experiment configuration, parallel runs with
//! deterministic aggregation, file outputs, and the validation suite that
//! replays every acceptance check.

pub mod config;
pub mod output;
pub mod run;
pub mod validate;

pub use config::ExperimentConfig;
pub use run::{run_experiment, RunArtifacts};
pub use validate::{validate, CheckResult, Suite};
