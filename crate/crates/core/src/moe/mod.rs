//! Mixture-of-Experts classifier: a linear gate over 2-layer tanh MLP experts,
//! trained locally with SGD and aggregated per expert on the server.

mod aggregate;
pub mod checkpoint;
mod eval;
mod forward;
pub mod gradcheck;
mod params;
mod train;

pub use aggregate::{aggregate, ClientUpdate};
pub use eval::{evaluate, evaluate_top_k, Evaluation};
pub use forward::{forward, loss_and_grad, ForwardOutput, LossAndGrad};
pub use params::{init_params, Dense, ExpertParams, MoEDims, MoEParams};
pub use train::{local_train, reward_observations, LocalUpdate, RoutingStats, TrainConfig};
