use serde::{Deserialize, Serialize};

use crate::datagen::{Partition, TaskParams};
use crate::error::{Error, Result};
use crate::moe::{MoEDims, TrainConfig};
use crate::sched::{DecayTarget, ScoreParams, Strategy, Weights};

/// Everything a simulation run depends on. Deserialized from TOML; every
/// section and field is optional and falls back to the default benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Master seed. Every random stream in a run is derived from it.
    pub seed: u64,
    pub num_rounds: usize,
    pub clients_per_round: usize,
    pub strategy: Strategy,
    /// Threads for per-client local training. 1 runs everything on the caller's thread.
    pub workers: usize,
    pub scheduler: SchedulerConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub data: DataConfig,
    pub clients: ClientConfig,
    pub experts: ExpertConfig,
    pub warm_start: WarmStartConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_rounds: 60,
            clients_per_round: 16,
            strategy: Strategy::LoadBalanced,
            workers: 1,
            scheduler: SchedulerConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            data: DataConfig::default(),
            clients: ClientConfig::default(),
            experts: ExpertConfig::default(),
            warm_start: WarmStartConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub w_f: f64,
    pub w_u: f64,
    /// Upper bound on experts per client per round, on top of memory.
    pub system_cap: usize,
    pub decay_target: DecayTarget,
    /// Run the coverage post-pass (only affects load_balanced).
    pub coverage_repair: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            delta: 0.05,
            gamma: 0.9,
            w_f: 1.0,
            w_u: 1.0,
            system_cap: 2,
            decay_target: DecayTarget::Prior,
            coverage_repair: true,
        }
    }
}

impl SchedulerConfig {
    pub fn score_params(&self) -> ScoreParams {
        ScoreParams {
            alpha: self.alpha,
            delta: self.delta,
            gamma: self.gamma,
            decay_target: self.decay_target,
        }
    }

    pub fn weights(&self) -> Weights {
        Weights {
            fitness: self.w_f,
            usage: self.w_u,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden_dim: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub num_experts: usize,
    pub num_clients: usize,
    /// Planted tasks. Client `c`'s dominant task (and oracle expert) is `c mod num_tasks`.
    pub num_tasks: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    pub samples_per_client: usize,
    pub test_samples: usize,
    pub noise_sigma: f64,
    pub center_norm: f64,
    pub class_norm: f64,
    pub partition: Partition,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            num_experts: 8,
            num_clients: 16,
            num_tasks: 8,
            input_dim: 16,
            num_classes: 4,
            samples_per_client: 1000,
            test_samples: 4000,
            noise_sigma: 0.3,
            center_norm: 3.0,
            class_norm: 2.0,
            partition: Partition::Skew(0.9),
        }
    }
}

impl DataConfig {
    pub fn task_params(&self) -> TaskParams {
        TaskParams {
            num_tasks: self.num_tasks,
            input_dim: self.input_dim,
            num_classes: self.num_classes,
            noise_sigma: self.noise_sigma,
            center_norm: self.center_norm,
            class_norm: self.class_norm,
        }
    }
}

/// Inclusive range a per-client quantity is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn validate(&self, name: &str, allow_zero: bool) -> Result<()> {
        let lower_ok = if allow_zero { self.min >= 0.0 } else { self.min > 0.0 };
        if !(lower_ok && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::config(format!(
                "clients.{name}: need {} min <= max, got [{}, {}]",
                if allow_zero { "0 <=" } else { "0 <" },
                self.min,
                self.max
            )));
        }
        Ok(())
    }
}

/// Participation probability: one value for everybody or one per client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Availability {
    Uniform(f64),
    PerClient(Vec<f64>),
}

impl Availability {
    pub fn resolve(&self, num_clients: usize) -> Result<Vec<f64>> {
        let v = match self {
            Availability::Uniform(p) => vec![*p; num_clients],
            Availability::PerClient(v) => {
                if v.len() != num_clients {
                    return Err(Error::config(format!(
                        "clients.availability has {} entries for {num_clients} clients",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        if let Some((c, p)) = v.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::config(format!("clients.availability[{c}] = {p} not in [0, 1]")));
        }
        Ok(v)
    }
}

/// Heterogeneous client capacities. Memory is drawn uniformly; the rates and
/// latency log-uniformly (latency uniformly when its minimum is zero).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub availability: Availability,
    pub memory_budget: Range,
    /// Samples per second per unit of expert compute cost.
    pub compute_rate: Range,
    pub bandwidth_down: Range,
    pub bandwidth_up: Range,
    pub latency: Range,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            availability: Availability::Uniform(1.0),
            memory_budget: Range::new(1.0, 3.0),
            compute_rate: Range::new(2_000.0, 20_000.0),
            bandwidth_down: Range::new(1e5, 1e6),
            bandwidth_up: Range::new(2e4, 2e5),
            latency: Range::new(0.01, 0.1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertConfig {
    pub memory_cost: f64,
    pub compute_cost: f64,
    /// Transfer size of one expert. Defaults to its f32 parameter footprint.
    pub param_bytes: Option<u64>,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            memory_cost: 1.0,
            compute_cost: 1.0,
            param_bytes: None,
        }
    }
}

/// Server-side pretraining of expert `e` on a small public sample of task `e`
/// before round 0. The gate is left untouched. `samples = 0` disables it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmStartConfig {
    pub samples: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for WarmStartConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            epochs: 10,
            lr: 0.1,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn dims(&self) -> MoEDims {
        MoEDims {
            input_dim: self.data.input_dim,
            hidden_dim: self.model.hidden_dim,
            num_classes: self.data.num_classes,
            num_experts: self.data.num_experts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        let positive = [
            ("clients_per_round", self.clients_per_round),
            ("workers", self.workers),
            ("scheduler.system_cap", self.scheduler.system_cap),
            ("model.hidden_dim", self.model.hidden_dim),
            ("data.num_experts", d.num_experts),
            ("data.num_clients", d.num_clients),
            ("data.num_tasks", d.num_tasks),
            ("data.input_dim", d.input_dim),
            ("data.num_classes", d.num_classes),
            ("data.samples_per_client", d.samples_per_client),
            ("data.test_samples", d.test_samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be > 0")));
            }
        }
        self.scheduler.score_params().validate()?;
        self.scheduler.weights().validate()?;
        self.training.validate().map_err(|e| Error::config(format!("training: {e}")))?;
        d.partition.validate()?;
        if !(d.noise_sigma.is_finite() && d.noise_sigma >= 0.0) {
            return Err(Error::config(format!("data.noise_sigma {} must be >= 0", d.noise_sigma)));
        }
        self.clients.availability.resolve(d.num_clients)?;
        let c = &self.clients;
        c.memory_budget.validate("memory_budget", false)?;
        c.compute_rate.validate("compute_rate", false)?;
        c.bandwidth_down.validate("bandwidth_down", false)?;
        c.bandwidth_up.validate("bandwidth_up", false)?;
        c.latency.validate("latency", true)?;
        let e = &self.experts;
        if !(e.memory_cost.is_finite() && e.memory_cost > 0.0 && e.compute_cost.is_finite() && e.compute_cost > 0.0) {
            return Err(Error::config("experts.memory_cost and experts.compute_cost must be > 0"));
        }
        if e.param_bytes == Some(0) {
            return Err(Error::config("experts.param_bytes must be > 0"));
        }
        let w = &self.warm_start;
        if w.samples > 0 && (w.epochs == 0 || !(w.lr.is_finite() && w.lr >= 0.0)) {
            return Err(Error::config("warm_start needs epochs > 0 and a finite lr >= 0"));
        }
        Ok(())
    }
}
