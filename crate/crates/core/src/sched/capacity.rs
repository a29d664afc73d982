use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What one client can do per round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientCapacityProfile {
    /// Samples per second processed per unit expert compute cost.
    pub compute_rate: f64,
    /// Abstract memory units available for loaded experts.
    pub memory_budget: f64,
    /// Bytes per second, server to client.
    pub bandwidth_down: f64,
    /// Bytes per second, client to server.
    pub bandwidth_up: f64,
    /// Fixed seconds of overhead per transfer.
    pub latency: f64,
}

impl ClientCapacityProfile {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("compute_rate", self.compute_rate),
            ("memory_budget", self.memory_budget),
            ("bandwidth_down", self.bandwidth_down),
            ("bandwidth_up", self.bandwidth_up),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.latency.is_finite() && self.latency >= 0.0) {
            return Err(Error::config(format!("latency must be >= 0, got {}", self.latency)));
        }
        Ok(())
    }
}

/// Resource footprint of one expert.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertResourceSpec {
    pub memory_cost: f64,
    pub param_bytes: u64,
    pub compute_cost: f64,
}

impl ExpertResourceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.memory_cost.is_finite() && self.memory_cost > 0.0) {
            return Err(Error::config(format!("memory_cost must be > 0, got {}", self.memory_cost)));
        }
        if self.param_bytes == 0 {
            return Err(Error::config("param_bytes must be > 0"));
        }
        if !(self.compute_cost.is_finite() && self.compute_cost > 0.0) {
            return Err(Error::config(format!(
                "compute_cost must be > 0, got {}",
                self.compute_cost
            )));
        }
        Ok(())
    }
}

/// Resource specs for every expert, indexed by expert id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertPool {
    specs: Vec<ExpertResourceSpec>,
}

impl ExpertPool {
    pub fn uniform(spec: ExpertResourceSpec, num_experts: usize) -> Result<Self> {
        Self::new(vec![spec; num_experts])
    }

    pub fn new(specs: Vec<ExpertResourceSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::config("expert pool is empty"));
        }
        for s in &specs {
            s.validate()?;
        }
        Ok(Self { specs })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn spec(&self, expert: usize) -> &ExpertResourceSpec {
        &self.specs[expert]
    }

    pub fn specs(&self) -> &[ExpertResourceSpec] {
        &self.specs
    }
}

/// `min(floor(memory_budget / memory_cost), system_cap)`.
pub fn max_experts(profile: &ClientCapacityProfile, spec: &ExpertResourceSpec, system_cap: usize) -> usize {
    let fit = (profile.memory_budget / spec.memory_cost).floor();
    if !(fit.is_finite() && fit >= 0.0) {
        return 0;
    }
    (fit as usize).min(system_cap)
}

/// Experts that fit in the client's memory at all, ascending by id.
///
/// With a uniform pool this is every expert or nothing.
pub fn candidate_experts(profile: &ClientCapacityProfile, pool: &ExpertPool, system_cap: usize) -> Vec<usize> {
    (0..pool.len())
        .filter(|&e| max_experts(profile, pool.spec(e), system_cap) >= 1)
        .collect()
}

/// Number of experts the client may hold this round (k_c).
///
/// Uses the most expensive candidate, so any k_c-subset of candidates fits in memory.
pub fn client_limit(profile: &ClientCapacityProfile, pool: &ExpertPool, system_cap: usize) -> usize {
    candidate_experts(profile, pool, system_cap)
        .iter()
        .map(|&e| max_experts(profile, pool.spec(e), system_cap))
        .min()
        .unwrap_or(0)
}


/// Capacity context for a whole round: per-client profiles, expert pool, system cap.
#[derive(Clone, Copy, Debug)]
pub struct CapacityView<'a> {
    pub profiles: &'a [ClientCapacityProfile],
    pub pool: &'a ExpertPool,
    pub system_cap: usize,
}

impl<'a> CapacityView<'a> {
    pub fn new(profiles: &'a [ClientCapacityProfile], pool: &'a ExpertPool, system_cap: usize) -> Self {
        Self {
            profiles,
            pool,
            system_cap,
        }
    }

    pub fn limit(&self, client: usize) -> usize {
        client_limit(&self.profiles[client], self.pool, self.system_cap)
    }

    pub fn candidates(&self, client: usize) -> Vec<usize> {
        if self.limit(client) == 0 {
            return Vec::new();
        }
        candidate_experts(&self.profiles[client], self.pool, self.system_cap)
    }
}
