//! Property checks shared by the `properties` and `acceptance` targets.
//! Each returns `Err` with the shrunk counterexample on failure.

#![allow(dead_code)]

use fedmoe::sched::{
    assign_round, coverage_repair, init_scores, CapacityView, ClientCapacityProfile, ExpertPool, ExpertResourceSpec,
    RewardObservation, ScoreParams, ScoreState, Strategy as Sched, Weights,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const STRATEGIES: [Sched; 3] = [Sched::LoadBalanced, Sched::Greedy, Sched::Random];

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub fitness: Vec<Vec<f64>>,
    pub usage: Vec<f64>,
    pub memory: Vec<f64>,
    pub costs: Vec<f64>,
    pub system_cap: usize,
    pub participants: Vec<usize>,
    pub seed: u64,
}

impl Instance {
    pub fn state(&self) -> ScoreState {
        ScoreState::from_parts(self.fitness.clone(), self.usage.clone(), ScoreParams::new(0.3, 0.05, 0.9)).unwrap()
    }

    pub fn profiles(&self) -> Vec<ClientCapacityProfile> {
        self.memory
            .iter()
            .map(|&m| ClientCapacityProfile {
                compute_rate: 1e4,
                memory_budget: m,
                bandwidth_down: 1e6,
                bandwidth_up: 1e5,
                latency: 0.01,
            })
            .collect()
    }

    pub fn pool(&self) -> ExpertPool {
        ExpertPool::new(
            self.costs
                .iter()
                .map(|&c| ExpertResourceSpec {
                    memory_cost: c,
                    param_bytes: 1000,
                    compute_cost: 1.0,
                })
                .collect(),
        )
        .unwrap()
    }
}

/// Random score states, heterogeneous memory budgets and expert costs.
pub fn instances() -> impl Strategy<Value = Instance> {
    (1usize..=8, 1usize..=10)
        .prop_flat_map(|(clients, experts)| {
            (
                prop::collection::vec(prop::collection::vec(0.0..=1.0f64, experts), clients),
                prop::collection::vec(prop_oneof![Just(0.0), 0.0..50.0f64], experts),
                prop::collection::vec(0.0..6.0f64, clients),
                prop::collection::vec(prop_oneof![Just(1.0), 0.25..3.0f64], experts),
                0usize..=5,
                prop::collection::vec(any::<bool>(), clients),
                any::<u64>(),
            )
        })
        .prop_filter_map("someone participates", |(fitness, usage, memory, costs, cap, picks, seed)| {
            let participants: Vec<usize> = picks.iter().enumerate().filter(|(_, &p)| p).map(|(c, _)| c).collect();
            (!participants.is_empty()).then_some(Instance {
                fitness,
                usage,
                memory,
                costs,
                system_cap: cap,
                participants,
                seed,
            })
        })
}

/// No plan, repaired or not, ever exceeds a client's memory or the system cap.
pub fn capacity_safety(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&instances(), |inst| {
            let state = inst.state();
            let profiles = inst.profiles();
            let pool = inst.pool();
            let view = CapacityView::new(&profiles, &pool, inst.system_cap);
            for strategy in STRATEGIES {
                let weights = Weights::default().for_strategy(strategy);
                let plan = assign_round(&state, &view, &inst.participants, strategy, weights, inst.seed).unwrap();
                let repaired = coverage_repair(&plan, &state, &view, weights).unwrap();
                for p in [&plan, &repaired] {
                    for (&client, experts) in &p.assignments {
                        prop_assert!(inst.participants.contains(&client));
                        prop_assert!(experts.len() <= inst.system_cap);
                        let used: f64 = experts.iter().map(|&e| inst.costs[e]).sum();
                        prop_assert!(used <= inst.memory[client] + 1e-9, "client {client} uses {used}");
                        let mut sorted = experts.clone();
                        sorted.dedup();
                        prop_assert_eq!(sorted.len(), experts.len());
                        prop_assert!(experts.iter().all(|&e| e < inst.costs.len()));
                    }
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn observations() -> impl Strategy<Value = Vec<Vec<(usize, usize, f64)>>> {
    prop::collection::vec(prop::collection::vec((0usize..4, 0usize..5, 0.0..=1.0f64), 0..8), 1..40)
}

fn dedup(round: &[(usize, usize, f64)]) -> Vec<RewardObservation> {
    let mut seen = std::collections::BTreeSet::new();
    round
        .iter()
        .filter(|(c, e, _)| seen.insert((*c, *e)))
        .map(|&(client_id, expert_id, reward)| RewardObservation {
            client_id,
            expert_id,
            reward,
            sample_contribution: 1,
        })
        .collect()
}

/// Fitness stays in [0, 1] under any reward sequence and any valid parameters.
pub fn fitness_bounded(cases: u32) -> Result<(), String> {
    let params = (0.0..=1.0f64, 0.0..=1.0f64, 0.0..1.0f64);
    runner(cases)
        .run(&(params, observations()), |((alpha, delta, gamma), rounds)| {
            let mut s = init_scores(4, 5, ScoreParams::new(alpha, delta, gamma)).unwrap();
            for round in &rounds {
                s = s.update_fitness(&dedup(round)).unwrap();
                for c in 0..4 {
                    for e in 0..5 {
                        let f = s.fitness(c, e);
                        prop_assert!((0.0..=1.0).contains(&f), "fitness {f}");
                    }
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// A constant reward is a fixed point of the EMA, and repeated observation
/// converges to it geometrically at rate (1 - alpha).
pub fn ema_fixed_point(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(0.01..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64), |(alpha, r, start)| {
            let obs = [RewardObservation {
                client_id: 0,
                expert_id: 0,
                reward: r,
                sample_contribution: 1,
            }];
            let params = ScoreParams::new(alpha, 0.05, 0.9);
            let at_r = ScoreState::from_parts(vec![vec![r]], vec![0.0], params).unwrap();
            prop_assert!((at_r.update_fitness(&obs).unwrap().fitness(0, 0) - r).abs() < 1e-12);

            let mut s = ScoreState::from_parts(vec![vec![start]], vec![0.0], params).unwrap();
            for n in 1..=20 {
                s = s.update_fitness(&obs).unwrap();
                let gap = (start - r).abs() * (1.0 - alpha).powi(n);
                prop_assert!(((s.fitness(0, 0) - r).abs() - gap).abs() < 1e-9);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Without contributions usage shrinks by exactly gamma per round.
pub fn usage_decay(cases: u32) -> Result<(), String> {
    let usage = prop::collection::vec(0.0..1e4f64, 1..8);
    runner(cases)
        .run(&(usage, 0.0..1.0f64, 1usize..30), |(usage, gamma, rounds)| {
            let n = usage.len();
            let params = ScoreParams::new(0.3, 0.05, gamma);
            let mut s = ScoreState::from_parts(vec![vec![0.5; n]], usage.clone(), params).unwrap();
            let zero = vec![0.0; n];
            for _ in 0..rounds {
                let next = s.update_usage(&zero).unwrap();
                for e in 0..n {
                    prop_assert!(next.usage()[e] <= s.usage()[e]);
                }
                s = next;
            }
            for e in 0..n {
                let want = usage[e] * gamma.powi(rounds as i32);
                prop_assert!((s.usage()[e] - want).abs() <= 1e-9 * usage[e].max(1.0));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Scaling both weights by a power of two (exact in floating point) never
/// changes a deterministic plan.
pub fn argmax_invariance(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(instances(), -4i32..=4), |(inst, exp)| {
            let state = inst.state();
            let profiles = inst.profiles();
            let pool = inst.pool();
            let view = CapacityView::new(&profiles, &pool, inst.system_cap);
            let scale = 2f64.powi(exp);
            for strategy in [Sched::LoadBalanced, Sched::Greedy] {
                let w = Weights::default().for_strategy(strategy);
                let scaled = Weights {
                    fitness: w.fitness * scale,
                    usage: w.usage * scale,
                };
                let a = assign_round(&state, &view, &inst.participants, strategy, w, 0).unwrap();
                let b = assign_round(&state, &view, &inst.participants, strategy, scaled, 0).unwrap();
                prop_assert_eq!(&a.assignments, &b.assignments);
                let ra = coverage_repair(&a, &state, &view, w).unwrap();
                let rb = coverage_repair(&b, &state, &view, scaled).unwrap();
                prop_assert_eq!(ra.assignments, rb.assignments);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Name, case count and check for every property suite.
pub fn suites() -> Vec<(&'static str, u32, fn(u32) -> Result<(), String>)> {
    vec![
        ("capacity safety", 10_000, capacity_safety),
        ("fitness bounded", 1_000, fitness_bounded),
        ("ema fixed point", 1_000, ema_fixed_point),
        ("usage decay", 1_000, usage_decay),
        ("argmax invariance", 2_000, argmax_invariance),
    ]
}
