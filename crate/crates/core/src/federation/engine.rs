use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::select::select_clients;
use super::time::round_time;
use crate::datagen::{gen_client_data, gen_tasks, gen_test_set, oracle_alignment, ClientDataset, TaskSpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::moe::{
    aggregate, evaluate_top_k, init_params, local_train, reward_observations, ClientUpdate, LocalUpdate, MoEParams,
    TrainConfig,
};
use crate::rng::{derive_path, derive_seed, SimRng};
use crate::sched::{
    assign_round, coverage_repair, init_scores, AssignmentPlan, CapacityView, ClientCapacityProfile, ExpertPool,
    ExpertResourceSpec, RewardObservation, ScoreState, Strategy,
};

pub(crate) const TAG_TASKS: u64 = 0x7461_736b;
pub(crate) const TAG_CLIENTS: u64 = 0x6461_7461;
const TAG_TEST: u64 = 0x7465_7374;
const TAG_PROFILES: u64 = 0x7072_6f66;
const TAG_INIT: u64 = 0x696e_6974;
const TAG_WARM: u64 = 0x7761_726d;
const TAG_ROUND: u64 = 0x726f_756e;
const TAG_SELECT: u64 = 1;
const TAG_ASSIGN: u64 = 2;
const TAG_TRAIN: u64 = 3;

/// One communication round, as seen by the server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Nobody was available; params and scores passed through unchanged.
    pub skipped: bool,
    pub participants: Vec<usize>,
    pub plan: AssignmentPlan,
    pub observations: Vec<RewardObservation>,
    /// Samples routed to each expert this round, summed over clients.
    pub contributions: Vec<f64>,
    pub round_time: f64,
    /// Global test metrics after aggregation.
    pub accuracy: f64,
    pub loss: f64,
}

/// Everything derived from a config before round 0: data, capacities and the
/// planted oracle.
pub struct SimEnv {
    pub config: SimConfig,
    pub tasks: Vec<TaskSpec>,
    pub clients: Vec<ClientDataset>,
    pub test: Dataset,
    pub profiles: Vec<ClientCapacityProfile>,
    pub pool: ExpertPool,
    pub availability: Vec<f64>,
    /// Expert each client should end up aligned with.
    pub oracle: Vec<usize>,
    threads: Option<rayon::ThreadPool>,
}

#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub params: MoEParams,
    pub state: ScoreState,
    pub records: Vec<RoundRecord>,
}

fn log_uniform(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else if lo <= 0.0 {
        rng.uniform_in(lo, hi)
    } else {
        rng.uniform_in(lo.ln(), hi.ln()).exp()
    }
}

impl SimEnv {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let d = &config.data;
        let tasks = gen_tasks(&d.task_params(), derive_seed(seed, TAG_TASKS))?;
        let clients = gen_client_data(
            &tasks,
            d.num_clients,
            d.samples_per_client,
            d.partition,
            derive_seed(seed, TAG_CLIENTS),
        )?;
        let (test, _) = gen_test_set(&tasks, d.test_samples, derive_seed(seed, TAG_TEST))?;

        let c = &config.clients;
        let profiles = (0..d.num_clients)
            .map(|client| {
                let mut rng = SimRng::derive(seed, &[TAG_PROFILES, client as u64]);
                let p = ClientCapacityProfile {
                    memory_budget: rng.uniform_in(c.memory_budget.min, c.memory_budget.max),
                    compute_rate: log_uniform(&mut rng, c.compute_rate.min, c.compute_rate.max),
                    bandwidth_down: log_uniform(&mut rng, c.bandwidth_down.min, c.bandwidth_down.max),
                    bandwidth_up: log_uniform(&mut rng, c.bandwidth_up.min, c.bandwidth_up.max),
                    latency: log_uniform(&mut rng, c.latency.min, c.latency.max),
                };
                p.validate()?;
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;

        let dims = config.dims();
        let spec = ExpertResourceSpec {
            memory_cost: config.experts.memory_cost,
            param_bytes: config
                .experts
                .param_bytes
                .unwrap_or(4 * dims.expert_param_count() as u64),
            compute_cost: config.experts.compute_cost,
        };
        let pool = ExpertPool::uniform(spec, d.num_experts)?;
        let availability = c.availability.resolve(d.num_clients)?;
        let oracle = oracle_alignment(d.num_clients, d.num_tasks);

        let threads = if config.workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Error::config(format!("cannot start {} workers: {e}", config.workers)))?;
            Some(pool)
        } else {
            None
        };

        Ok(Self {
            config,
            tasks,
            clients,
            test,
            profiles,
            pool,
            availability,
            oracle,
            threads,
        })
    }

    pub fn capacity(&self) -> CapacityView<'_> {
        CapacityView::new(&self.profiles, &self.pool, self.config.scheduler.system_cap)
    }

    pub fn samples_per_client(&self) -> Vec<usize> {
        self.clients.iter().map(|c| c.data.len()).collect()
    }

    /// Random init followed by the expert warm start.
    pub fn initial_params(&self) -> Result<MoEParams> {
        let seed = self.config.seed;
        let mut params = init_params(self.config.dims(), derive_seed(seed, TAG_INIT))?;
        let warm = self.config.warm_start;
        if warm.samples == 0 {
            return Ok(params);
        }
        let train = TrainConfig {
            epochs: warm.epochs,
            lr: warm.lr,
            batch_size: self.config.training.batch_size,
            top_k: 1,
        };
        let classes = self.config.data.num_classes;
        for e in 0..self.tasks.len().min(params.dims.num_experts) {
            let mut rng = SimRng::derive(seed, &[TAG_WARM, e as u64]);
            let mut data = Dataset::empty(params.dims.input_dim);
            let mut x = Vec::new();
            for _ in 0..warm.samples {
                let class = rng.below(classes);
                self.tasks[e].sample(class, &mut rng, &mut x);
                data.push(&x, class);
            }
            let update = local_train(&params, &[e], &data, &train, derive_path(seed, &[TAG_WARM, e as u64, 1]))?
                .expect("one expert assigned");
            let (_, expert) = update.experts.into_iter().next().expect("one expert returned");
            params.experts[e] = expert;
        }
        Ok(params)
    }

    pub fn initial_state(&self) -> Result<ScoreState> {
        init_scores(
            self.config.data.num_clients,
            self.config.data.num_experts,
            self.config.scheduler.score_params(),
        )
    }

    fn evaluate(&self, params: &MoEParams) -> Result<(f64, f64)> {
        let all: Vec<usize> = (0..params.dims.num_experts).collect();
        let e = evaluate_top_k(params, &self.test, &all, self.config.training.top_k)?;
        Ok((e.accuracy, e.loss))
    }

    fn train_all(
        &self,
        params: &MoEParams,
        plan: &AssignmentPlan,
        round_seed: u64,
    ) -> Result<Vec<(usize, Option<LocalUpdate>)>> {
        let jobs: Vec<(usize, &[usize])> = plan.assignments.iter().map(|(&c, e)| (c, e.as_slice())).collect();
        let train = |&(c, experts): &(usize, &[usize])| -> Result<(usize, Option<LocalUpdate>)> {
            let seed = derive_path(round_seed, &[TAG_TRAIN, c as u64]);
            let update = local_train(params, experts, &self.clients[c].data, &self.config.training, seed)?;
            Ok((c, update))
        };
        match &self.threads {
            None => jobs.iter().map(train).collect(),
            Some(pool) => pool.install(|| jobs.par_iter().map(train).collect()),
        }
    }
}

/// Executes round `round`: select, assign (+ repair), train locally,
/// aggregate, update usage, update fitness, evaluate.
pub fn run_round(
    env: &SimEnv,
    params: &MoEParams,
    state: &ScoreState,
    round: usize,
) -> Result<(MoEParams, ScoreState, RoundRecord)> {
    let config = &env.config;
    let num_experts = config.data.num_experts;
    let round_seed = derive_path(config.seed, &[TAG_ROUND, round as u64]);

    let mut rng = SimRng::derive(round_seed, &[TAG_SELECT]);
    let participants = select_clients(&env.availability, config.clients_per_round, &mut rng);
    if participants.is_empty() {
        let (accuracy, loss) = env.evaluate(params)?;
        let record = RoundRecord {
            round,
            skipped: true,
            participants,
            plan: AssignmentPlan {
                assignments: Default::default(),
                per_client_limit: Default::default(),
                strategy: config.strategy,
            },
            observations: Vec::new(),
            contributions: vec![0.0; num_experts],
            round_time: 0.0,
            accuracy,
            loss,
        };
        return Ok((params.clone(), state.clone(), record));
    }

    let capacity = env.capacity();
    let weights = config.scheduler.weights();
    let mut plan = assign_round(
        state,
        &capacity,
        &participants,
        config.strategy,
        weights,
        derive_seed(round_seed, TAG_ASSIGN),
    )?;
    if config.scheduler.coverage_repair && config.strategy == Strategy::LoadBalanced {
        plan = coverage_repair(&plan, state, &capacity, weights)?;
    }

    let mut updates = Vec::new();
    let mut observations = Vec::new();
    for (client, update) in env.train_all(params, &plan, round_seed)? {
        if let Some(update) = update {
            observations.extend(reward_observations(
                client,
                plan.experts(client),
                &update.stats,
                config.data.num_classes,
            ));
            updates.push(ClientUpdate {
                client_id: client,
                update,
            });
        }
    }

    let new_params = aggregate(params, &updates)?;
    let mut contributions = vec![0.0; num_experts];
    for o in &observations {
        contributions[o.expert_id] += o.sample_contribution as f64;
    }
    let new_state = state.update_usage(&contributions)?.update_fitness(&observations)?;
    let round_time = round_time(
        &plan,
        &env.profiles,
        &env.pool,
        &env.samples_per_client(),
        config.training.epochs,
    );
    let (accuracy, loss) = env.evaluate(&new_params)?;
    let record = RoundRecord {
        round,
        skipped: false,
        participants,
        plan,
        observations,
        contributions,
        round_time,
        accuracy,
        loss,
    };
    Ok((new_params, new_state, record))
}

/// Folds [`run_round`] over `config.num_rounds` rounds.
pub fn run_simulation(config: &SimConfig) -> Result<SimOutcome> {
    let env = SimEnv::new(config.clone())?;
    run_env(&env)
}

pub(crate) fn run_env(env: &SimEnv) -> Result<SimOutcome> {
    let mut params = env.initial_params()?;
    let mut state = env.initial_state()?;
    let mut records = Vec::with_capacity(env.config.num_rounds);
    for round in 0..env.config.num_rounds {
        let (p, s, record) = run_round(env, &params, &state, round)?;
        log::info!(
            "{} seed {} round {:>3}: accuracy {:.4} loss {:.4} time {:.3}s{}",
            env.config.strategy,
            env.config.seed,
            round + 1,
            record.accuracy,
            record.loss,
            record.round_time,
            if record.skipped { " (skipped)" } else { "" }
        );
        params = p;
        state = s;
        records.push(record);
    }
    Ok(SimOutcome { params, state, records })
}
