//! Config-driven experiments: build, run, sweep, verify, report.
//!
//! The contract with the outside world is the TOML config schema (see
//! [`config::ExperimentConfig`]), the trace CSV format defined in
//! [`crate::metrics`], the sidecar metadata file written next to each trace,
//! and the sweep/report summary CSVs. Runs are reproducible: the config plus
//! its seed determine every byte of the CSV body.

pub mod config;
pub mod report;
pub mod runner;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig};
pub use runner::{execute, verify_config, write_artifacts, HarnessError, MetaSidecar, RunArtifacts, VerifyOutcome};
pub use sweep::{parse_axis_values, sweep, SweepAxis, SweepOutcome};

/// Environment variable capping sweep/replica parallelism.
pub const THREADS_ENV: &str = "MINIMAX_NET_THREADS";
