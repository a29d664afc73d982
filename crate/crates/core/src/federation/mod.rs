//! Communication rounds: participant selection, assignment, local training,
//! aggregation, score updates and the synchronous round-time model.

mod config;
mod engine;
mod select;
mod time;

pub use config::{
    Availability, ClientConfig, DataConfig, ExpertConfig, ModelConfig, Range, SchedulerConfig, SimConfig,
    WarmStartConfig,
};
pub(crate) use engine::{run_env, TAG_CLIENTS, TAG_TASKS};
pub use engine::{run_round, run_simulation, RoundRecord, SimEnv, SimOutcome};
pub use select::select_clients;
pub use time::{client_time, round_time};
