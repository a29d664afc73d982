//! Synthetic non-IID classification data with planted task structure.
//!
//! Every task has its own orthogonal projection and class prototypes. A
//! client draws most of its samples from one dominant task, so the expert
//! that specializes on that task is the client's ground-truth best expert.

mod clients;
pub mod export;
mod tasks;

pub use clients::{gen_client_data, gen_test_set, oracle_alignment, ClientDataset, Partition};
pub use tasks::{gen_tasks, TaskParams, TaskSpec};
