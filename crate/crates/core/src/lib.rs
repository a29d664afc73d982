//! Deterministic simulator and scheduler for federated training of
//! Mixture-of-Experts models with capacity-aware client-expert alignment.
//!
//! - [`sched`]: fitness/usage scores, capacity profiles, assignment strategies
//! - [`moe`]: the gated MLP-expert model, local SGD, per-expert aggregation
//! - [`datagen`]: synthetic non-IID tasks with a planted best expert per client
//! - [`federation`]: round engine, client selection, round-time model
//! - [`harness`]: multi-run experiments, metrics and output files

pub mod cli;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod federation;
pub mod harness;
pub mod moe;
pub mod rng;
pub mod sched;

pub use dataset::Dataset;
pub use error::{Error, Result};
