//! Experiment runner behind the command-line tool: configuration, honest
//! and adversarial runs, reports, transcript replay and database snapshots.

mod config;
mod experiment;
mod replay;
mod snapshot;

pub use config::{ConfigError, Experiment, ExperimentConfig, OutputFormat};
pub use experiment::{
    provision_fwcfp, provision_lwjx, render, run_experiment, DesyncReport, ExperimentResult, HarnessError,
    HonestReport, Report, ADVANTAGE_TOLERANCE,
};
pub use replay::{replay_file, replay_transcript, ReplayError, ReplayVerdict};
pub use snapshot::{lwjx_record_diff, Database, FwcfpRow, Snapshot, SnapshotError, SNAPSHOT_VERSION};
