use crate::sched::{AssignmentPlan, ClientCapacityProfile, ExpertPool};

/// Modelled seconds for one client: download the assigned experts, train
/// them, upload them, plus one latency per direction. Zero if nothing is assigned.
pub fn client_time(
    assigned: &[usize],
    profile: &ClientCapacityProfile,
    pool: &ExpertPool,
    samples: usize,
    epochs: usize,
) -> f64 {
    if assigned.is_empty() {
        return 0.0;
    }
    let bytes: f64 = assigned.iter().map(|&e| pool.spec(e).param_bytes as f64).sum();
    let compute_cost: f64 = assigned.iter().map(|&e| pool.spec(e).compute_cost).sum();
    2.0 * profile.latency
        + bytes / profile.bandwidth_down
        + (epochs as f64 * samples as f64 * compute_cost) / profile.compute_rate
        + bytes / profile.bandwidth_up
}

/// Synchronous round time: the slowest participating client.
pub fn round_time(
    plan: &AssignmentPlan,
    profiles: &[ClientCapacityProfile],
    pool: &ExpertPool,
    samples_per_client: &[usize],
    epochs: usize,
) -> f64 {
    plan.assignments
        .iter()
        .map(|(&c, experts)| client_time(experts, &profiles[c], pool, samples_per_client[c], epochs))
        .fold(0.0, f64::max)
}
