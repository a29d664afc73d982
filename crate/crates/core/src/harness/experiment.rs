use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::g9;
use super::metrics::{alignment_recovery, load_stats, rounds_to_target};
use crate::error::{Error, Result};
use crate::federation::{run_env, RoundRecord, SimConfig, SimEnv, SimOutcome};
use crate::moe::checkpoint;
use crate::sched::Strategy;

/// Accuracy a run has to reach for `rounds_to_target`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Fraction of the same seed's load_balanced final accuracy (of the run's
    /// own final accuracy when load_balanced is not part of the experiment).
    Relative(f64),
    Absolute(f64),
}

impl Default for Target {
    fn default() -> Self {
        Target::Relative(0.8)
    }
}

impl Target {
    fn validate(&self) -> Result<()> {
        let v = match *self {
            Target::Relative(v) | Target::Absolute(v) => v,
        };
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::config(format!("target {v} not in (0, 1)")));
        }
        Ok(())
    }
}

/// Everything the output files are a function of.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub package_version: String,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub target: Target,
    /// Resolved configuration; `seed` and `strategy` are overridden per run
    /// and `workers` does not affect results.
    pub config: SimConfig,
}

impl Manifest {
    pub fn new(config: &SimConfig, strategies: &[Strategy], seeds: &[u64], target: Target) -> Self {
        let mut config = config.clone();
        config.workers = 1;
        let mut strategies = strategies.to_vec();
        strategies.sort_unstable();
        strategies.dedup();
        let mut seeds = seeds.to_vec();
        seeds.sort_unstable();
        seeds.dedup();
        Self {
            format: "fedmoe-manifest".into(),
            version: 1,
            package_version: env!("CARGO_PKG_VERSION").into(),
            strategies,
            seeds,
            target,
            config,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub strategy: Strategy,
    pub seed: u64,
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub target: f64,
    pub rounds_to_target: Option<usize>,
    /// Cumulative samples routed to each expert over all rounds.
    pub expert_load: Vec<f64>,
    pub load_cv: f64,
    pub load_gini: f64,
    pub alignment_recovery: f64,
    /// Modelled wall-clock seconds summed over rounds.
    pub total_time: f64,
    pub accuracy: Vec<f64>,
    /// Cumulative client x expert assignment counts.
    pub heatmap: Vec<Vec<u64>>,
}

impl RunSummary {
    fn is_finite(&self) -> bool {
        self.final_accuracy.is_finite()
            && self.final_loss.is_finite()
            && self.load_cv.is_finite()
            && self.load_gini.is_finite()
            && self.total_time.is_finite()
            && self.accuracy.iter().all(|a| a.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    /// Sorted by (strategy, seed).
    pub runs: Vec<RunSummary>,
}

impl ExperimentSummary {
    pub fn get(&self, strategy: Strategy, seed: u64) -> Option<&RunSummary> {
        self.runs.iter().find(|r| r.strategy == strategy && r.seed == seed)
    }

    pub fn mean_final_accuracy(&self, strategy: Strategy) -> Option<f64> {
        let v: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.strategy == strategy)
            .map(|r| r.final_accuracy)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn all_finite(&self) -> bool {
        self.runs.iter().all(RunSummary::is_finite)
    }
}

struct Run {
    strategy: Strategy,
    seed: u64,
    env: SimEnv,
    outcome: SimOutcome,
}

fn heatmap(records: &[RoundRecord], num_clients: usize, num_experts: usize) -> Vec<Vec<u64>> {
    let mut h = vec![vec![0u64; num_experts]; num_clients];
    for r in records {
        for (&c, experts) in &r.plan.assignments {
            for &e in experts {
                h[c][e] += 1;
            }
        }
    }
    h
}

fn summarize(run: &Run, target: f64) -> RunSummary {
    let records = &run.outcome.records;
    let num_experts = run.env.config.data.num_experts;
    let mut load = vec![0.0; num_experts];
    for r in records {
        for (l, c) in load.iter_mut().zip(&r.contributions) {
            *l += c;
        }
    }
    let stats = load_stats(&load);
    let accuracy: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let (final_accuracy, final_loss) = match records.last() {
        Some(r) => (r.accuracy, r.loss),
        None => (f64::NAN, f64::NAN),
    };
    RunSummary {
        strategy: run.strategy,
        seed: run.seed,
        final_accuracy,
        final_loss,
        target,
        rounds_to_target: rounds_to_target(&accuracy, target),
        load_cv: stats.cv,
        load_gini: stats.gini,
        alignment_recovery: alignment_recovery(&run.outcome.state.fitness_rows(), &run.env.oracle),
        total_time: records.iter().map(|r| r.round_time).sum(),
        expert_load: load,
        accuracy,
        heatmap: heatmap(records, run.env.config.data.num_clients, num_experts),
    }
}

fn resolve_target(target: Target, runs: &[Run], run: &Run) -> f64 {
    match target {
        Target::Absolute(t) => t,
        Target::Relative(f) => {
            let reference = runs
                .iter()
                .find(|r| r.strategy == Strategy::LoadBalanced && r.seed == run.seed)
                .unwrap_or(run);
            let last = reference.outcome.records.last().map_or(f64::NAN, |r| r.accuracy);
            f * last
        }
    }
}

fn summarize_all(runs: &[Run], target: Target) -> ExperimentSummary {
    ExperimentSummary {
        runs: runs.iter().map(|r| summarize(r, resolve_target(target, runs, r))).collect(),
    }
}

fn metrics_csv(runs: &[Run]) -> String {
    let num_experts = runs.first().map_or(0, |r| r.env.config.data.num_experts);
    let mut s = String::from("round,strategy,seed,accuracy,loss,round_time,cum_time,participants");
    for e in 0..num_experts {
        let _ = write!(s, ",expert_{e}");
    }
    s.push('\n');
    for run in runs {
        let mut cum = 0.0;
        for r in &run.outcome.records {
            cum += r.round_time;
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.round + 1,
                run.strategy,
                run.seed,
                g9(r.accuracy),
                g9(r.loss),
                g9(r.round_time),
                g9(cum),
                r.participants.len()
            );
            for c in &r.contributions {
                let _ = write!(s, ",{}", g9(*c));
            }
            s.push('\n');
        }
    }
    s
}

fn summary_csv(summary: &ExperimentSummary) -> String {
    let num_experts = summary.runs.first().map_or(0, |r| r.expert_load.len());
    let mut s = String::from(
        "strategy,seed,final_accuracy,final_loss,rounds_to_target,target,load_cv,load_gini,alignment_recovery,total_time",
    );
    for e in 0..num_experts {
        let _ = write!(s, ",expert_{e}");
    }
    s.push('\n');
    for r in &summary.runs {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.strategy,
            r.seed,
            g9(r.final_accuracy),
            g9(r.final_loss),
            r.rounds_to_target.map(|n| n.to_string()).unwrap_or_default(),
            g9(r.target),
            g9(r.load_cv),
            g9(r.load_gini),
            g9(r.alignment_recovery),
            g9(r.total_time)
        );
        for l in &r.expert_load {
            let _ = write!(s, ",{}", g9(*l));
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct HeatmapFile<'a> {
    format: &'static str,
    version: u32,
    num_clients: usize,
    num_experts: usize,
    runs: Vec<HeatmapRun<'a>>,
}

#[derive(Serialize)]
struct HeatmapRun<'a> {
    strategy: Strategy,
    seed: u64,
    counts: &'a [Vec<u64>],
}

fn heatmap_json(config: &SimConfig, summary: &ExperimentSummary) -> String {
    let file = HeatmapFile {
        format: "fedmoe-heatmap",
        version: 1,
        num_clients: config.data.num_clients,
        num_experts: config.data.num_experts,
        runs: summary
            .runs
            .iter()
            .map(|r| HeatmapRun {
                strategy: r.strategy,
                seed: r.seed,
                counts: &r.heatmap,
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&file).expect("heatmap serializes");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Fails if `dir` already holds a manifest that differs from `manifest`.
pub(crate) fn check_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = dir.join("manifest.json");
    match fs::read_to_string(&path) {
        Ok(existing) if existing == manifest.to_json() => Ok(()),
        Ok(_) => Err(Error::Conflict {
            path,
            message: "existing manifest was produced by a different configuration".into(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn write_outputs(dir: &Path, manifest: &Manifest, runs: &[Run], summary: &ExperimentSummary) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    write_file(&dir.join("metrics.csv"), metrics_csv(runs).as_bytes())?;
    write_file(&dir.join("summary.csv"), summary_csv(summary).as_bytes())?;
    write_file(&dir.join("heatmap.json"), heatmap_json(&manifest.config, summary).as_bytes())?;
    let ckpt = dir.join("checkpoints");
    fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    for run in runs {
        let stem = format!("{}_seed{}", run.strategy, run.seed);
        checkpoint::write(
            &ckpt.join(format!("{stem}.ckpt")),
            &run.outcome.params,
            run.seed,
            run.outcome.records.len(),
        )?;
        let mut scores = serde_json::to_string(&run.outcome.state).expect("scores serialize");
        scores.push('\n');
        write_file(&ckpt.join(format!("{stem}.scores.json")), scores.as_bytes())?;
    }
    Ok(())
}

/// Runs every (strategy, seed) pair of `base` and, when `out_dir` is given,
/// writes `manifest.json`, `metrics.csv`, `summary.csv`, `heatmap.json` and
/// per-run checkpoints there.
///
/// If a run fails, outputs for the runs that completed are still written
/// before the error is returned.
pub fn run_experiment(
    base: &SimConfig,
    strategies: &[Strategy],
    seeds: &[u64],
    target: Target,
    out_dir: Option<&Path>,
) -> Result<ExperimentSummary> {
    if strategies.is_empty() || seeds.is_empty() {
        return Err(Error::config("need at least one strategy and one seed"));
    }
    target.validate()?;
    base.validate()?;
    let manifest = Manifest::new(base, strategies, seeds, target);
    if let Some(dir) = out_dir {
        check_manifest(dir, &manifest)?;
    }

    let mut runs = Vec::new();
    let mut failure = None;
    'outer: for &strategy in &manifest.strategies {
        for &seed in &manifest.seeds {
            let mut config = base.clone();
            config.strategy = strategy;
            config.seed = seed;
            let result = SimEnv::new(config).and_then(|env| {
                let outcome = run_env(&env)?;
                Ok(Run {
                    strategy,
                    seed,
                    env,
                    outcome,
                })
            });
            match result {
                Ok(run) => runs.push(run),
                Err(e) => {
                    failure = Some(e);
                    break 'outer;
                }
            }
        }
    }

    let summary = summarize_all(&runs, target);
    if let Some(dir) = out_dir {
        write_outputs(dir, &manifest, &runs, &summary)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}
