use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};

/// Uninformed prior for a client-expert pair nobody has observed yet.
pub const FITNESS_PRIOR: f64 = 0.5;

/// Where fitness of a non-interacting pair drifts to each round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayTarget {
    /// Back toward the 0.5 prior.
    #[default]
    Prior,
    /// Toward zero.
    Zero,
}

impl DecayTarget {
    fn value(self) -> f64 {
        match self {
            DecayTarget::Prior => FITNESS_PRIOR,
            DecayTarget::Zero => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    /// Fitness EMA rate, in (0, 1].
    pub alpha: f64,
    /// Per-round decay for pairs that did not interact, in [0, 1).
    pub delta: f64,
    /// Usage decay factor, in [0, 1).
    pub gamma: f64,
    #[serde(default)]
    pub decay_target: DecayTarget,
}

impl ScoreParams {
    pub fn new(alpha: f64, delta: f64, gamma: f64) -> Self {
        Self {
            alpha,
            delta,
            gamma,
            decay_target: DecayTarget::Prior,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha {} not in (0, 1]", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::config(format!("delta {} not in [0, 1)", self.delta)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        Ok(())
    }
}

/// One client's training feedback for one assigned expert.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardObservation {
    pub client_id: usize,
    pub expert_id: usize,
    /// In [0, 1].
    pub reward: f64,
    /// Samples the client routed to this expert this round.
    pub sample_contribution: u64,
}

/// Server-side fitness matrix and usage vector.
///
/// Values are replaced, never mutated in place: every update returns a new state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreState {
    num_clients: usize,
    num_experts: usize,
    /// Row-major `num_clients x num_experts`.
    fitness: Vec<f64>,
    usage: Vec<f64>,
    params: ScoreParams,
}

pub fn init_scores(num_clients: usize, num_experts: usize, params: ScoreParams) -> Result<ScoreState> {
    if num_clients == 0 || num_experts == 0 {
        return Err(Error::config(format!(
            "score state needs at least one client and one expert (got {num_clients} x {num_experts})"
        )));
    }
    params.validate()?;
    Ok(ScoreState {
        num_clients,
        num_experts,
        fitness: vec![FITNESS_PRIOR; num_clients * num_experts],
        usage: vec![0.0; num_experts],
        params,
    })
}

impl ScoreState {
    /// Builds a state from explicit values; used by tests, oracles and FFI.
    pub fn from_parts(
        fitness: Vec<Vec<f64>>,
        usage: Vec<f64>,
        params: ScoreParams,
    ) -> Result<ScoreState> {
        params.validate()?;
        let num_clients = fitness.len();
        let num_experts = usage.len();
        if num_clients == 0 || num_experts == 0 {
            return Err(Error::config("empty score state"));
        }
        if fitness.iter().any(|row| row.len() != num_experts) {
            return Err(Error::input("fitness rows must match usage length"));
        }
        let flat: Vec<f64> = fitness.into_iter().flatten().collect();
        if flat.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::input("fitness entries must lie in [0, 1]"));
        }
        if usage.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
            return Err(Error::input("usage entries must be finite and >= 0"));
        }
        Ok(ScoreState {
            num_clients,
            num_experts,
            fitness: flat,
            usage,
            params,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn params(&self) -> &ScoreParams {
        &self.params
    }

    pub fn fitness(&self, client: usize, expert: usize) -> f64 {
        self.fitness[client * self.num_experts + expert]
    }

    pub fn fitness_row(&self, client: usize) -> &[f64] {
        &self.fitness[client * self.num_experts..(client + 1) * self.num_experts]
    }

    pub fn fitness_rows(&self) -> Vec<Vec<f64>> {
        self.fitness.chunks(self.num_experts).map(<[f64]>::to_vec).collect()
    }

    pub fn usage(&self) -> &[f64] {
        &self.usage
    }

    /// Usage scaled by `max(1, max_j u[j])`, so every entry lies in [0, 1].
    pub fn normalized_usage(&self) -> Vec<f64> {
        let scale = self.usage.iter().copied().fold(1.0_f64, f64::max);
        self.usage.iter().map(|u| u / scale).collect()
    }

    /// Applies one round of reward feedback.
    ///
    /// Observed pairs move by EMA toward their reward; every other pair decays
    /// toward the configured target.
    pub fn update_fitness(&self, observations: &[RewardObservation]) -> Result<ScoreState> {
        let mut seen = HashSet::with_capacity(observations.len());
        for obs in observations {
            check_index("client", obs.client_id, self.num_clients)?;
            check_index("expert", obs.expert_id, self.num_experts)?;
            if !(0.0..=1.0).contains(&obs.reward) {
                return Err(Error::input(format!(
                    "reward {} for ({}, {}) not in [0, 1]",
                    obs.reward, obs.client_id, obs.expert_id
                )));
            }
            if !seen.insert((obs.client_id, obs.expert_id)) {
                return Err(Error::input(format!(
                    "duplicate observation for client {} expert {}",
                    obs.client_id, obs.expert_id
                )));
            }
        }

        let ScoreParams {
            alpha,
            delta,
            decay_target,
            ..
        } = self.params;
        let target = decay_target.value();
        let mut fitness: Vec<f64> = self
            .fitness
            .iter()
            .map(|&f| (f * (1.0 - delta) + delta * target).clamp(0.0, 1.0))
            .collect();
        for obs in observations {
            let idx = obs.client_id * self.num_experts + obs.expert_id;
            let f = self.fitness[idx];
            fitness[idx] = ((1.0 - alpha) * f + alpha * obs.reward).clamp(0.0, 1.0);
        }
        Ok(ScoreState {
            fitness,
            ..self.clone()
        })
    }

    /// `u' = gamma * u + (1 - gamma) * contribution`, per expert.
    pub fn update_usage(&self, contributions: &[f64]) -> Result<ScoreState> {
        if contributions.len() != self.num_experts {
            return Err(Error::input(format!(
                "expected {} contributions, got {}",
                self.num_experts,
                contributions.len()
            )));
        }
        if let Some(bad) = contributions.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::input(format!("contribution {bad} must be finite and >= 0")));
        }
        let gamma = self.params.gamma;
        let usage = self
            .usage
            .iter()
            .zip(contributions)
            .map(|(&u, &c)| gamma * u + (1.0 - gamma) * c)
            .collect();
        Ok(ScoreState {
            usage,
            ..self.clone()
        })
    }

    /// `w_f * f[c, e] - w_u * normalized_usage[e]`.
    pub fn desirability(&self, client: usize, expert: usize, w_f: f64, w_u: f64) -> Result<f64> {
        check_index("client", client, self.num_clients)?;
        check_index("expert", expert, self.num_experts)?;
        let scale = self.usage.iter().copied().fold(1.0_f64, f64::max);
        Ok(w_f * self.fitness(client, expert) - w_u * (self.usage[expert] / scale))
    }

    /// Desirability of every expert for one client.
    pub fn desirability_row(&self, client: usize, w_f: f64, w_u: f64) -> Result<Vec<f64>> {
        check_index("client", client, self.num_clients)?;
        let norm = self.normalized_usage();
        Ok(self
            .fitness_row(client)
            .iter()
            .zip(&norm)
            .map(|(f, u)| w_f * f - w_u * u)
            .collect())
    }
}
