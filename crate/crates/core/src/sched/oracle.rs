//! Brute-force reference for load-balanced assignment.
//!
//! Enumerates every size-k subset of a client's candidates and keeps the one
//! with the largest summed desirability, recomputing desirability from the raw
//! fitness and usage values instead of going through [`ScoreState::desirability`].
//! Among subsets with equal sums the lexicographically smallest id list wins,
//! which is what ascending-id tie-breaking implies.

use super::{
    assign_round, CapacityView, ClientCapacityProfile, ExpertPool, ExpertResourceSpec, ScoreParams,
    ScoreState, Strategy, Weights,
};
use crate::error::Result;
use crate::rng::SimRng;

/// Largest-sum subset of `candidates` with exactly `min(k, |candidates|)` members.
pub fn best_subset(scores: &[f64], candidates: &[usize], k: usize) -> (Vec<usize>, f64) {
    let n = candidates.len();
    let k = k.min(n);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| candidates[i]).collect();
        let sum: f64 = subset.iter().map(|&e| scores[e]).sum();
        let replace = match &best {
            None => true,
            Some((ids, s)) => sum > *s || (sum == *s && subset < *ids),
        };
        if replace {
            best = Some((subset, sum));
        }
    }
    best.unwrap_or((Vec::new(), 0.0))
}

/// Desirability from first principles: `w_f f - w_u u / max(1, max u)`.
pub fn reference_scores(fitness: &[f64], usage: &[f64], weights: Weights) -> Vec<f64> {
    let mut max_u = 1.0_f64;
    for &u in usage {
        if u > max_u {
            max_u = u;
        }
    }
    fitness
        .iter()
        .zip(usage)
        .map(|(f, u)| weights.fitness * f - weights.usage * (u / max_u))
        .collect()
}

/// One small scheduling instance.
#[derive(Clone, Debug)]
pub struct OracleInstance {
    pub index: usize,
    pub fitness: Vec<Vec<f64>>,
    pub usage: Vec<f64>,
    pub limits: Vec<usize>,
    pub weights: Weights,
}

impl OracleInstance {
    fn profiles(&self) -> Vec<ClientCapacityProfile> {
        self.limits
            .iter()
            .map(|&k| ClientCapacityProfile {
                compute_rate: 1.0,
                memory_budget: k as f64 + 0.5,
                bandwidth_down: 1.0,
                bandwidth_up: 1.0,
                latency: 0.0,
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub instance: OracleInstance,
    pub client: usize,
    pub scheduler: Vec<usize>,
    pub oracle: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct OracleReport {
    pub instances: usize,
    pub clients_checked: usize,
    pub mismatches: usize,
    pub first_mismatch: Option<Mismatch>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.instances > 0
    }
}

const FITNESS_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const USAGE_GRID: [f64; 4] = [0.0, 1.0, 2.0, 4.0];
const WEIGHT_SETS: [(f64, f64); 3] = [(1.0, 1.0), (1.0, 0.5), (2.0, 1.0)];
/// Value draws per (shape, limit vector): two tie-heavy grid draws and one continuous draw.
pub const DRAWS_PER_SHAPE: usize = 3;

/// Every instance with 1..=4 clients, 1..=4 experts and per-client k in {0, 1, 2}.
pub fn enumerate_instances(seed: u64) -> Vec<OracleInstance> {
    let mut out = Vec::new();
    for num_clients in 1..=4usize {
        for num_experts in 1..=4usize {
            let combos = 3usize.pow(num_clients as u32);
            for code in 0..combos {
                let limits: Vec<usize> = (0..num_clients)
                    .map(|i| (code / 3usize.pow(i as u32)) % 3)
                    .collect();
                for draw in 0..DRAWS_PER_SHAPE {
                    let index = out.len();
                    let mut rng = SimRng::derive(seed, &[num_clients as u64, num_experts as u64, code as u64, draw as u64]);
                    let continuous = draw + 1 == DRAWS_PER_SHAPE;
                    let fitness = (0..num_clients)
                        .map(|_| {
                            (0..num_experts)
                                .map(|_| {
                                    if continuous {
                                        rng.uniform()
                                    } else {
                                        FITNESS_GRID[rng.below(FITNESS_GRID.len())]
                                    }
                                })
                                .collect()
                        })
                        .collect();
                    let usage = (0..num_experts)
                        .map(|_| {
                            if continuous {
                                rng.uniform_in(0.0, 50.0)
                            } else {
                                USAGE_GRID[rng.below(USAGE_GRID.len())]
                            }
                        })
                        .collect();
                    let (w_f, w_u) = WEIGHT_SETS[index % WEIGHT_SETS.len()];
                    out.push(OracleInstance {
                        index,
                        fitness,
                        usage,
                        limits: limits.clone(),
                        weights: Weights {
                            fitness: w_f,
                            usage: w_u,
                        },
                    });
                }
            }
        }
    }
    out
}

/// Runs the scheduler against the brute-force oracle on every instance.
pub fn check_instances(instances: &[OracleInstance]) -> Result<OracleReport> {
    let mut report = OracleReport::default();
    for inst in instances {
        report.instances += 1;
        let state = ScoreState::from_parts(
            inst.fitness.clone(),
            inst.usage.clone(),
            ScoreParams::new(0.2, 0.05, 0.9),
        )?;
        let num_experts = inst.usage.len();
        let profiles = inst.profiles();
        let pool = ExpertPool::uniform(
            ExpertResourceSpec {
                memory_cost: 1.0,
                param_bytes: 1,
                compute_cost: 1.0,
            },
            num_experts,
        )?;
        let capacity = CapacityView::new(&profiles, &pool, 2);
        let participants: Vec<usize> = (0..inst.limits.len()).collect();
        let plan = assign_round(&state, &capacity, &participants, Strategy::LoadBalanced, inst.weights, 0)?;
        let all: Vec<usize> = (0..num_experts).collect();
        for client in participants {
            report.clients_checked += 1;
            let scores = reference_scores(&inst.fitness[client], &inst.usage, inst.weights);
            let candidates: &[usize] = if inst.limits[client] == 0 { &[] } else { &all };
            let (oracle, _) = best_subset(&scores, candidates, inst.limits[client]);
            if plan.experts(client) != oracle.as_slice() {
                report.mismatches += 1;
                if report.first_mismatch.is_none() {
                    report.first_mismatch = Some(Mismatch {
                        instance: inst.clone(),
                        client,
                        scheduler: plan.experts(client).to_vec(),
                        oracle,
                    });
                }
            }
        }
    }
    Ok(report)
}
