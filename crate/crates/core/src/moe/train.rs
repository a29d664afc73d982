use serde::{Deserialize, Serialize};

use super::forward::{check_batch, Pass};
use super::params::{Dense, ExpertParams, MoEParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::sched::RewardObservation;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Experts each sample is routed to. 1 is plain top-1 routing.
    pub top_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            lr: 0.05,
            batch_size: 32,
            top_k: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.top_k == 0 {
            return Err(Error::config("epochs, batch_size and top_k must be > 0"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Per-expert routing during the final local epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingStats {
    /// Samples routed to each expert (indexed by global expert id).
    pub counts: Vec<u64>,
    /// Sum of each expert's own cross-entropy on its routed samples.
    pub loss_sum: Vec<f64>,
    /// Samples processed in the epoch.
    pub samples: u64,
}

impl RoutingStats {
    pub fn new(num_experts: usize) -> Self {
        Self {
            counts: vec![0; num_experts],
            loss_sum: vec![0.0; num_experts],
            samples: 0,
        }
    }

    pub fn mean_loss(&self, expert: usize) -> Option<f64> {
        (self.counts[expert] > 0).then(|| self.loss_sum[expert] / self.counts[expert] as f64)
    }

    /// Fraction of the client's samples routed to `expert`.
    pub fn share(&self, expert: usize) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.counts[expert] as f64 / self.samples as f64
        }
    }
}

/// What a client sends back after local training.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalUpdate {
    /// Updated weights of the assigned experts, ascending by expert id.
    pub experts: Vec<(usize, ExpertParams)>,
    pub gate: Dense,
    pub stats: RoutingStats,
}

/// Minibatch SGD on the assigned experts and the gate.
///
/// Returns `Ok(None)` when nothing is assigned: the client sits the round out.
pub fn local_train(
    params: &MoEParams,
    assigned: &[usize],
    data: &Dataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<Option<LocalUpdate>> {
    config.validate()?;
    if assigned.is_empty() {
        return Ok(None);
    }
    if data.is_empty() {
        return Err(Error::input("local dataset is empty"));
    }
    check_batch(params, data)?;
    let top_k = config.top_k.min(assigned.len());
    let mut pass = Pass::new(params, assigned, top_k)?;
    let active = pass.active.clone();

    let mut work = params.clone();
    let mut grads = MoEParams::zeros(params.dims);
    let mut stats = RoutingStats::new(params.dims.num_experts);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..config.epochs {
        let last = epoch + 1 == config.epochs;
        let mut rng = SimRng::derive(seed, &[epoch as u64]);
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            grads.values_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (x, y) = data.sample(i);
                pass.train_step(&work, x, y, &mut grads, scale);
                if last {
                    stats.samples += 1;
                    for &slot in pass.routed_slots() {
                        let e = pass.active[slot];
                        stats.counts[e] += 1;
                        stats.loss_sum[e] += pass.expert_loss[slot];
                    }
                }
            }
            work.gate.axpy(-config.lr, &grads.gate);
            for &e in &active {
                work.experts[e].axpy(-config.lr, &grads.experts[e]);
            }
        }
    }

    let MoEParams { gate, mut experts, .. } = work;
    let experts = active
        .iter()
        .map(|&e| (e, std::mem::replace(&mut experts[e], ExpertParams::zeros(&params.dims))))
        .collect();
    Ok(Some(LocalUpdate { experts, gate, stats }))
}

/// Turns routing statistics into fitness rewards for every assigned expert.
///
/// `reward = share * (1 - normalized_loss)`, where the loss is divided by
/// `ln(num_classes)` (the loss of a uniform prediction) and clamped to [0, 1].
/// An assigned expert that received no samples gets reward 0.
pub fn reward_observations(
    client_id: usize,
    assigned: &[usize],
    stats: &RoutingStats,
    num_classes: usize,
) -> Vec<RewardObservation> {
    let uniform_loss = (num_classes as f64).ln();
    let mut experts = assigned.to_vec();
    experts.sort_unstable();
    experts
        .into_iter()
        .map(|e| {
            let reward = match stats.mean_loss(e) {
                None => 0.0,
                Some(loss) => {
                    let normalized = if uniform_loss > 0.0 {
                        (loss / uniform_loss).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    (stats.share(e) * (1.0 - normalized)).clamp(0.0, 1.0)
                }
            };
            RewardObservation {
                client_id,
                expert_id: e,
                reward,
                sample_contribution: stats.counts[e],
            }
        })
        .collect()
}
