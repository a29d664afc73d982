use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::capacity::CapacityView;
use super::scores::ScoreState;
use crate::error::{check_index, Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Top-k by composite desirability (fitness minus normalized usage).
    LoadBalanced,
    /// Top-k by fitness alone.
    Greedy,
    /// k experts drawn uniformly from the candidates.
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::Greedy, Strategy::LoadBalanced];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::LoadBalanced => "load_balanced",
            Strategy::Greedy => "greedy",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "load_balanced" => Ok(Strategy::LoadBalanced),
            "greedy" => Ok(Strategy::Greedy),
            "random" => Ok(Strategy::Random),
            other => Err(Error::config(format!(
                "unknown strategy `{other}` (expected load_balanced, greedy or random)"
            ))),
        }
    }
}

/// Weighting of fitness against normalized usage in the desirability score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub fitness: f64,
    pub usage: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            fitness: 1.0,
            usage: 1.0,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        if !(self.fitness.is_finite() && self.fitness >= 0.0) {
            return Err(Error::config(format!("w_f must be >= 0, got {}", self.fitness)));
        }
        if !(self.usage.is_finite() && self.usage >= 0.0) {
            return Err(Error::config(format!("w_u must be >= 0, got {}", self.usage)));
        }
        Ok(())
    }

    /// The weights a strategy actually ranks with.
    pub fn for_strategy(self, strategy: Strategy) -> Weights {
        match strategy {
            Strategy::Greedy => Weights { usage: 0.0, ..self },
            _ => self,
        }
    }
}

/// Experts each participating client trains this round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    /// Client id to expert ids, ascending.
    pub assignments: BTreeMap<usize, Vec<usize>>,
    /// Client id to k_c.
    pub per_client_limit: BTreeMap<usize, usize>,
    pub strategy: Strategy,
}

impl AssignmentPlan {
    pub fn experts(&self, client: usize) -> &[usize] {
        self.assignments.get(&client).map_or(&[], Vec::as_slice)
    }

    /// Number of clients holding each expert.
    pub fn expert_load(&self, num_experts: usize) -> Vec<usize> {
        let mut load = vec![0; num_experts];
        for experts in self.assignments.values() {
            for &e in experts {
                load[e] += 1;
            }
        }
        load
    }

    pub fn total_assignments(&self) -> usize {
        self.assignments.values().map(Vec::len).sum()
    }

    /// Checks limits, uniqueness and expert id range.
    pub fn validate(&self, num_experts: usize) -> Result<()> {
        for (&client, experts) in &self.assignments {
            let limit = *self
                .per_client_limit
                .get(&client)
                .ok_or_else(|| Error::input(format!("client {client} has no recorded limit")))?;
            if experts.len() > limit {
                return Err(Error::input(format!(
                    "client {client} holds {} experts, limit {limit}",
                    experts.len()
                )));
            }
            for (i, &e) in experts.iter().enumerate() {
                check_index("expert", e, num_experts)?;
                if experts[..i].contains(&e) {
                    return Err(Error::input(format!("client {client} holds expert {e} twice")));
                }
            }
        }
        Ok(())
    }
}

/// Ranks `candidates` by descending score, ties to the lower expert id, and
/// keeps the first `k` (returned ascending).
pub(crate) fn top_k(candidates: &[usize], scores: &[f64], k: usize) -> Vec<usize> {
    let mut ranked = candidates.to_vec();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ranked.truncate(k);
    ranked.sort_unstable();
    ranked
}

/// Computes one round's client-expert assignment.
///
/// Pure in all arguments; `seed` only matters for [`Strategy::Random`], where
/// each client draws from its own stream derived from `(seed, client_id)`.
pub fn assign_round(
    state: &ScoreState,
    capacity: &CapacityView<'_>,
    participants: &[usize],
    strategy: Strategy,
    weights: Weights,
    seed: u64,
) -> Result<AssignmentPlan> {
    if participants.is_empty() {
        return Err(Error::input("assign_round needs at least one participant"));
    }
    weights.validate()?;
    if capacity.pool.len() != state.num_experts() {
        return Err(Error::input(format!(
            "expert pool has {} entries, score state {}",
            capacity.pool.len(),
            state.num_experts()
        )));
    }
    let weights = weights.for_strategy(strategy);

    let mut assignments = BTreeMap::new();
    let mut per_client_limit = BTreeMap::new();
    for &client in participants {
        check_index("client", client, state.num_clients())?;
        check_index("client profile", client, capacity.profiles.len())?;
        if assignments.contains_key(&client) {
            return Err(Error::input(format!("client {client} listed twice")));
        }
        let limit = capacity.limit(client);
        let candidates = capacity.candidates(client);
        let chosen = match strategy {
            Strategy::LoadBalanced | Strategy::Greedy => {
                let scores = state.desirability_row(client, weights.fitness, weights.usage)?;
                top_k(&candidates, &scores, limit)
            }
            Strategy::Random => {
                let mut rng = SimRng::derive(seed, &[client as u64]);
                let mut picked = rng.choose_distinct(&candidates, limit);
                picked.sort_unstable();
                picked
            }
        };
        assignments.insert(client, chosen);
        per_client_limit.insert(client, limit);
    }
    Ok(AssignmentPlan {
        assignments,
        per_client_limit,
        strategy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::{ClientCapacityProfile, ExpertPool, ExpertResourceSpec, ScoreParams};

    fn profile(memory_budget: f64) -> ClientCapacityProfile {
        ClientCapacityProfile {
            compute_rate: 1.0,
            memory_budget,
            bandwidth_down: 1.0,
            bandwidth_up: 1.0,
            latency: 0.0,
        }
    }

    fn pool(n: usize) -> ExpertPool {
        ExpertPool::uniform(
            ExpertResourceSpec {
                memory_cost: 1.0,
                param_bytes: 1,
                compute_cost: 1.0,
            },
            n,
        )
        .unwrap()
    }

    fn three_expert_state() -> ScoreState {
        ScoreState::from_parts(
            vec![vec![0.9, 0.5, 0.1]],
            vec![10.0, 2.0, 0.0],
            ScoreParams::new(0.2, 0.05, 0.9),
        )
        .unwrap()
    }

    #[test]
    fn load_balanced_prefers_underused() {
        let state = three_expert_state();
        let profiles = [profile(1.0)];
        let pool = pool(3);
        let cap = CapacityView::new(&profiles, &pool, 8);
        let plan = assign_round(&state, &cap, &[0], Strategy::LoadBalanced, Weights::default(), 0).unwrap();
        assert_eq!(plan.experts(0), &[1]);
        assert_eq!(plan.per_client_limit[&0], 1);
    }

    #[test]
    fn greedy_takes_highest_fitness() {
        let state = three_expert_state();
        let profiles = [profile(1.0)];
        let pool = pool(3);
        let cap = CapacityView::new(&profiles, &pool, 8);
        let plan = assign_round(&state, &cap, &[0], Strategy::Greedy, Weights::default(), 0).unwrap();
        assert_eq!(plan.experts(0), &[0]);
    }

    #[test]
    fn random_respects_limits_and_seed() {
        let state = ScoreState::from_parts(
            vec![vec![0.5; 6]; 3],
            vec![0.0; 6],
            ScoreParams::new(0.2, 0.05, 0.9),
        )
        .unwrap();
        let profiles = [profile(2.0), profile(3.5), profile(0.2)];
        let pool = pool(6);
        let cap = CapacityView::new(&profiles, &pool, 8);
        let a = assign_round(&state, &cap, &[0, 1, 2], Strategy::Random, Weights::default(), 9).unwrap();
        let b = assign_round(&state, &cap, &[0, 1, 2], Strategy::Random, Weights::default(), 9).unwrap();
        assert_eq!(a, b);
        a.validate(6).unwrap();
        assert_eq!(a.experts(0).len(), 2);
        assert_eq!(a.experts(1).len(), 3);
        assert!(a.experts(2).is_empty());
        let draws: std::collections::BTreeSet<Vec<usize>> = (0..20)
            .map(|s| {
                assign_round(&state, &cap, &[0], Strategy::Random, Weights::default(), s)
                    .unwrap()
                    .experts(0)
                    .to_vec()
            })
            .collect();
        assert!(draws.len() > 1);
    }

    #[test]
    fn ties_break_to_lower_ids() {
        let state = ScoreState::from_parts(
            vec![vec![0.5; 4]],
            vec![0.0; 4],
            ScoreParams::new(0.2, 0.05, 0.9),
        )
        .unwrap();
        let profiles = [profile(2.0)];
        let pool = pool(4);
        let cap = CapacityView::new(&profiles, &pool, 8);
        let plan = assign_round(&state, &cap, &[0], Strategy::LoadBalanced, Weights::default(), 0).unwrap();
        assert_eq!(plan.experts(0), &[0, 1]);
    }

    #[test]
    fn equal_fitness_selects_minimal_usage() {
        let state = ScoreState::from_parts(
            vec![vec![0.7; 4]],
            vec![40.0, 3.0, 25.0, 3.5],
            ScoreParams::new(0.2, 0.05, 0.9),
        )
        .unwrap();
        let profiles = [profile(2.0)];
        let pool = pool(4);
        let cap = CapacityView::new(&profiles, &pool, 8);
        let plan = assign_round(&state, &cap, &[0], Strategy::LoadBalanced, Weights::default(), 0).unwrap();
        assert_eq!(plan.experts(0), &[1, 3]);
    }

    #[test]
    fn errors() {
        let state = three_expert_state();
        let profiles = [profile(1.0)];
        let pool3 = pool(3);
        let cap = CapacityView::new(&profiles, &pool3, 8);
        assert!(matches!(
            assign_round(&state, &cap, &[], Strategy::Greedy, Weights::default(), 0),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            assign_round(&state, &cap, &[1], Strategy::Greedy, Weights::default(), 0),
            Err(Error::Index { .. })
        ));
        let pool4 = pool(4);
        let cap = CapacityView::new(&profiles, &pool4, 8);
        assert!(assign_round(&state, &cap, &[0], Strategy::Greedy, Weights::default(), 0).is_err());
    }

    #[test]
    fn strategy_round_trips_through_str() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("fast".parse::<Strategy>().is_err());
    }
}
