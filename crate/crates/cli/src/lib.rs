//! Experiment orchestration for `tape-core`: TOML configs, per-seed runs with
//! manifests and checkpoints, and comparison reports.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, Overrides, Suite};
pub use report::{build_report, emit_report, Report};
pub use run::{run_experiment, RunManifest, RunSummary};

/// Environment variable that takes precedence over `--out`.
pub const OUT_ENV: &str = "TAPE_LAB_OUT";
