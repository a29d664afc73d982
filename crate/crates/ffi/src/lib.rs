//! C ABI for the fedmoe scheduler and simulator.
//!
//! Conventions:
//! - every function returns a [`FedmoeStatus`]; results come back through
//!   out-pointers, which are written only on success
//! - objects are opaque handles created by `*_new`/`*_run`/`*_assign_*` and
//!   released with the matching `*_free` (passing NULL to `*_free` is a no-op)
//! - on failure, [`fedmoe_last_error`] returns a description that stays
//!   valid until the next fedmoe call on the same thread
//! - panics never cross the boundary; they surface as `FEDMOE_STATUS_PANIC`

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fedmoe::federation::{run_simulation, SimConfig, SimOutcome, SimEnv};
use fedmoe::harness::{alignment_recovery, load_stats};
use fedmoe::moe::checkpoint;
use fedmoe::sched::{
    assign_round, coverage_repair, init_scores, AssignmentPlan, CapacityView, ClientCapacityProfile, ExpertPool,
    ExpertResourceSpec, RewardObservation, ScoreParams, ScoreState, Strategy, Weights,
};
use fedmoe::Error;

/// Result code of every API call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FedmoeStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// Invalid configuration value or unparsable config text.
    Config = 2,
    /// Client, expert or round index out of range.
    Index = 3,
    /// Malformed arguments (duplicates, length mismatches, bad UTF-8).
    InvalidArgument = 4,
    /// File system failure.
    Io = 5,
    /// Malformed file contents.
    Format = 6,
    /// Results contained NaN or infinity.
    NonFinite = 7,
    /// Internal panic caught at the boundary.
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FedmoeStrategy {
    LoadBalanced = 0,
    Greedy = 1,
    Random = 2,
}

impl From<FedmoeStrategy> for Strategy {
    fn from(s: FedmoeStrategy) -> Self {
        match s {
            FedmoeStrategy::LoadBalanced => Strategy::LoadBalanced,
            FedmoeStrategy::Greedy => Strategy::Greedy,
            FedmoeStrategy::Random => Strategy::Random,
        }
    }
}

/// Mirrors `ClientCapacityProfile`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FedmoeCapacity {
    pub compute_rate: f64,
    pub memory_budget: f64,
    pub bandwidth_down: f64,
    pub bandwidth_up: f64,
    pub latency: f64,
}

/// Mirrors `ExpertResourceSpec`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FedmoeExpertSpec {
    pub memory_cost: f64,
    pub param_bytes: u64,
    pub compute_cost: f64,
}

/// Mirrors `RewardObservation`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FedmoeReward {
    pub client_id: usize,
    pub expert_id: usize,
    pub reward: f64,
    pub sample_contribution: u64,
}

/// Fitness matrix and usage vector.
pub struct FedmoeScores {
    state: ScoreState,
}

/// One round's client-expert assignment.
pub struct FedmoePlan {
    plan: AssignmentPlan,
}

/// A finished simulation run.
pub struct FedmoeSimulation {
    seed: u64,
    oracle: Vec<usize>,
    outcome: SimOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> FedmoeStatus {
    match err {
        Error::Config(_) => FedmoeStatus::Config,
        Error::Index { .. } => FedmoeStatus::Index,
        Error::Input(_) => FedmoeStatus::InvalidArgument,
        Error::Io { .. } | Error::Conflict { .. } => FedmoeStatus::Io,
        Error::Format { .. } => FedmoeStatus::Format,
        Error::NonFinite(_) => FedmoeStatus::NonFinite,
    }
}

struct Fail(FedmoeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(FedmoeStatus::NullPointer, format!("{name} is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FedmoeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FedmoeStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {msg}"));
            FedmoeStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(name))
    } else {
        Ok(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FedmoeStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

fn index(what: &str, i: usize, len: usize) -> Result<(), Fail> {
    if i < len {
        Ok(())
    } else {
        Err(Fail(FedmoeStatus::Index, format!("{what} {i} out of range (len {len})")))
    }
}

/// Description of the last failure on this thread, or NULL after a success.
#[no_mangle]
pub extern "C" fn fedmoe_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fedmoe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- scores -------------------------------------------------------------

/// Creates a score state with every fitness at 0.5 and usage at 0.
#[no_mangle]
pub unsafe extern "C" fn fedmoe_scores_new(
    num_clients: usize,
    num_experts: usize,
    alpha: f64,
    delta: f64,
    gamma: f64,
    out_scores: *mut *mut FedmoeScores,
) -> FedmoeStatus {
    guard(|| {
        let slot = out(out_scores, "out_scores")?;
        let state = init_scores(num_clients, num_experts, ScoreParams::new(alpha, delta, gamma))?;
        *slot = Box::into_raw(Box::new(FedmoeScores { state }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedmoe_scores_free(scores: *mut FedmoeScores) {
    if !scores.is_null() {
        drop(Box::from_raw(scores));
    }
}

#[no_mangle]
pub unsafe extern "C" fn fedmoe_scores_fitness(
    scores: *const FedmoeScores,
    client: usize,
    expert: usize,
    out_value: *mut f64,
) -> FedmoeStatus {
    guard(|| {
        let s = &scores.as_ref().ok_or_else(|| null("scores"))?.state;
        let slot = out(out_value, "out_value")?;
        index("client", client, s.num_clients())?;
        index("expert", expert, s.num_experts())?;
        *slot = s.fitness(client, expert);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedmoe_scores_usage(
    scores: *const FedmoeScores,
    expert: usize,
    out_value: *mut f64,
) -> FedmoeStatus {
    guard(|| {
        let s = &scores.as_ref().ok_or_else(|| null("scores"))?.state;
        let slot = out(out_value, "out_value")?;
        index("expert", expert, s.num_experts())?;
        *slot = s.usage()[expert];
        Ok(())
    })
}

/// `w_f * fitness - w_u * normalized usage`.
#[no_mangle]
pub unsafe extern "C" fn fedmoe_scores_desirability(
    scores: *const FedmoeScores,
    client: usize,
    expert: usize,
    w_f: f64,
    w_u: f64,
    out_value: *mut f64,
) -> FedmoeStatus {
    guard(|| {
        let s = &scores.as_ref().ok_or_else(|| null("scores"))?.state;
        let slot = out(out_value, "out_value")?;
        *slot = s.desirability(client, expert, w_f, w_u)?;
        Ok(())
    })
}

/// Applies one round of reward observations. On error the state is unchanged.
#[no_mangle]
pub unsafe extern "C" fn fedmoe_scores_update_fitness(
    scores: *mut FedmoeScores,
    rewards: *const FedmoeReward,
    num_rewards: usize,
) -> FedmoeStatus {
    guard(|| {
        let s = scores.as_mut().ok_or_else(|| null("scores"))?;
        let obs: Vec<RewardObservation> = slice(rewards, num_rewards, "rewards")?
            .iter()
            .map(|r| RewardObservation {
                client_id: r.client_id,
                expert_id: r.expert_id,
                reward: r.reward,
                sample_contribution: r.sample_contribution,
            })
            .collect();
        s.state = s.state.update_fitness(&obs)?;
        Ok(())
    })
}

/// Applies one round of per-expert contributions (`num_experts` values).
#[no_mangle]
pub unsafe extern "C" fn fedmoe_scores_update_usage(
    scores: *mut FedmoeScores,
    contributions: *const f64,
    num_experts: usize,
) -> FedmoeStatus {
    guard(|| {
        let s = scores.as_mut().ok_or_else(|| null("scores"))?;
        let c = slice(contributions, num_experts, "contributions")?;
        s.state = s.state.update_usage(c)?;
        Ok(())
    })
}

// ---- assignment ---------------------------------------------------------

/// Computes one round's assignment for `participants`.
///
/// `profiles` holds one entry per client known to `scores`; every expert
/// shares `spec`. `coverage_repair` only affects load_balanced.
#[no_mangle]
pub unsafe extern "C" fn fedmoe_assign_round(
    scores: *const FedmoeScores,
    profiles: *const FedmoeCapacity,
    num_profiles: usize,
    spec: *const FedmoeExpertSpec,
    system_cap: usize,
    participants: *const usize,
    num_participants: usize,
    strategy: FedmoeStrategy,
    w_f: f64,
    w_u: f64,
    seed: u64,
    coverage: bool,
    out_plan: *mut *mut FedmoePlan,
) -> FedmoeStatus {
    guard(|| {
        let s = &scores.as_ref().ok_or_else(|| null("scores"))?.state;
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        let slot = out(out_plan, "out_plan")?;
        let profiles: Vec<ClientCapacityProfile> = slice(profiles, num_profiles, "profiles")?
            .iter()
            .map(|p| ClientCapacityProfile {
                compute_rate: p.compute_rate,
                memory_budget: p.memory_budget,
                bandwidth_down: p.bandwidth_down,
                bandwidth_up: p.bandwidth_up,
                latency: p.latency,
            })
            .collect();
        for p in &profiles {
            p.validate()?;
        }
        let pool = ExpertPool::uniform(
            ExpertResourceSpec {
                memory_cost: spec.memory_cost,
                param_bytes: spec.param_bytes,
                compute_cost: spec.compute_cost,
            },
            s.num_experts(),
        )?;
        let view = CapacityView::new(&profiles, &pool, system_cap);
        let participants = slice(participants, num_participants, "participants")?;
        let weights = Weights {
            fitness: w_f,
            usage: w_u,
        };
        let strategy = Strategy::from(strategy);
        let mut plan = assign_round(s, &view, participants, strategy, weights, seed)?;
        if coverage {
            plan = coverage_repair(&plan, s, &view, weights)?;
        }
        *slot = Box::into_raw(Box::new(FedmoePlan { plan }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedmoe_plan_free(plan: *mut FedmoePlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Number of clients in the plan.
#[no_mangle]
pub unsafe extern "C" fn fedmoe_plan_num_clients(plan: *const FedmoePlan, out_count: *mut usize) -> FedmoeStatus {
    guard(|| {
        let p = &plan.as_ref().ok_or_else(|| null("plan"))?.plan;
        *out(out_count, "out_count")? = p.assignments.len();
        Ok(())
    })
}

/// The `position`-th client of the plan (ascending id), its capacity limit
/// and how many experts it was given.
#[no_mangle]
pub unsafe extern "C" fn fedmoe_plan_client(
    plan: *const FedmoePlan,
    position: usize,
    out_client: *mut usize,
    out_limit: *mut usize,
    out_num_experts: *mut usize,
) -> FedmoeStatus {
    guard(|| {
        let p = &plan.as_ref().ok_or_else(|| null("plan"))?.plan;
        index("position", position, p.assignments.len())?;
        let (client, experts) = p.assignments.iter().nth(position).expect("checked");
        *out(out_client, "out_client")? = *client;
        *out(out_limit, "out_limit")? = p.per_client_limit[client];
        *out(out_num_experts, "out_num_experts")? = experts.len();
        Ok(())
    })
}

/// Copies the experts assigned to `client` (ascending) into `buffer`.
/// `out_len` receives the full count; at most `capacity` ids are written.
#[no_mangle]
pub unsafe extern "C" fn fedmoe_plan_experts(
    plan: *const FedmoePlan,
    client: usize,
    buffer: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> FedmoeStatus {
    guard(|| {
        let p = &plan.as_ref().ok_or_else(|| null("plan"))?.plan;
        let experts = p
            .assignments
            .get(&client)
            .ok_or_else(|| Fail(FedmoeStatus::Index, format!("client {client} is not in the plan")))?;
        let len = out(out_len, "out_len")?;
        let n = experts.len().min(capacity);
        if n > 0 {
            if buffer.is_null() {
                return Err(null("buffer"));
            }
            std::slice::from_raw_parts_mut(buffer, n).copy_from_slice(&experts[..n]);
        }
        *len = experts.len();
        Ok(())
    })
}

// ---- metrics ------------------------------------------------------------

/// Coefficient of variation and Gini coefficient of a load vector.
#[no_mangle]
pub unsafe extern "C" fn fedmoe_load_stats(
    values: *const f64,
    len: usize,
    out_cv: *mut f64,
    out_gini: *mut f64,
) -> FedmoeStatus {
    guard(|| {
        let v = slice(values, len, "values")?;
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Fail(FedmoeStatus::InvalidArgument, "values must be finite and >= 0".into()));
        }
        let s = load_stats(v);
        *out(out_cv, "out_cv")? = s.cv;
        *out(out_gini, "out_gini")? = s.gini;
        Ok(())
    })
}

// ---- simulation ---------------------------------------------------------

/// Runs a full simulation from TOML config text (empty text = defaults).
#[no_mangle]
pub unsafe extern "C" fn fedmoe_simulation_run(
    config_toml: *const c_char,
    out_sim: *mut *mut FedmoeSimulation,
) -> FedmoeStatus {
    guard(|| {
        let text = text(config_toml, "config_toml")?;
        let slot = out(out_sim, "out_sim")?;
        let config = SimConfig::from_toml(text)?;
        let oracle = SimEnv::new(config.clone())?.oracle;
        let outcome = run_simulation(&config)?;
        *slot = Box::into_raw(Box::new(FedmoeSimulation {
            seed: config.seed,
            oracle,
            outcome,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedmoe_simulation_free(sim: *mut FedmoeSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

#[no_mangle]
pub unsafe extern "C" fn fedmoe_simulation_num_rounds(
    sim: *const FedmoeSimulation,
    out_rounds: *mut usize,
) -> FedmoeStatus {
    guard(|| {
        let s = sim.as_ref().ok_or_else(|| null("sim"))?;
        *out(out_rounds, "out_rounds")? = s.outcome.records.len();
        Ok(())
    })
}

/// Test accuracy and loss after round `round` (0-based) and its modelled duration.
#[no_mangle]
pub unsafe extern "C" fn fedmoe_simulation_round(
    sim: *const FedmoeSimulation,
    round: usize,
    out_accuracy: *mut f64,
    out_loss: *mut f64,
    out_round_time: *mut f64,
) -> FedmoeStatus {
    guard(|| {
        let s = sim.as_ref().ok_or_else(|| null("sim"))?;
        index("round", round, s.outcome.records.len())?;
        let r = &s.outcome.records[round];
        *out(out_accuracy, "out_accuracy")? = r.accuracy;
        *out(out_loss, "out_loss")? = r.loss;
        *out(out_round_time, "out_round_time")? = r.round_time;
        Ok(())
    })
}

/// Fraction of clients whose best-fitness expert is their planted expert.
#[no_mangle]
pub unsafe extern "C" fn fedmoe_simulation_alignment_recovery(
    sim: *const FedmoeSimulation,
    out_rate: *mut f64,
) -> FedmoeStatus {
    guard(|| {
        let s = sim.as_ref().ok_or_else(|| null("sim"))?;
        *out(out_rate, "out_rate")? = alignment_recovery(&s.outcome.state.fitness_rows(), &s.oracle);
        Ok(())
    })
}

/// Writes the final parameters as a checkpoint file.
#[no_mangle]
pub unsafe extern "C" fn fedmoe_simulation_write_checkpoint(
    sim: *const FedmoeSimulation,
    path: *const c_char,
) -> FedmoeStatus {
    guard(|| {
        let s = sim.as_ref().ok_or_else(|| null("sim"))?;
        let path = text(path, "path")?;
        checkpoint::write(Path::new(path), &s.outcome.params, s.seed, s.outcome.records.len())?;
        Ok(())
    })
}
