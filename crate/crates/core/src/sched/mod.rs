//! Client-expert scheduling: fitness and usage scores, capacity profiles,
//! and per-round assignment under the three strategies.

mod assign;
mod capacity;
pub mod oracle;
mod repair;
mod scores;

pub use assign::{assign_round, AssignmentPlan, Strategy, Weights};
pub use capacity::{
    candidate_experts, client_limit, max_experts, CapacityView, ClientCapacityProfile, ExpertPool,
    ExpertResourceSpec,
};
pub use repair::coverage_repair;
pub use scores::{init_scores, DecayTarget, RewardObservation, ScoreParams, ScoreState};
