//! Multi-run experiments: strategy comparisons over seeds, summary metrics
//! and the files they are written to.

mod experiment;
pub mod format;
mod metrics;

pub use experiment::{run_experiment, ExperimentSummary, Manifest, RunSummary, Target};
pub use metrics::{alignment_recovery, load_stats, rounds_to_target, LoadStats};
