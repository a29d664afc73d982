//! Command-line front end. `main.rs` forwards to [`run`].
//!
//! Exit codes: 0 success, 1 runtime or verification failure, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::datagen::{export, gen_client_data, gen_tasks};
use crate::error::Error;
use crate::federation::SimConfig;
use crate::harness::{run_experiment, ExperimentSummary, Target};
use crate::moe::gradcheck;
use crate::moe::MoEParams;
use crate::rng::derive_seed;
use crate::sched::{oracle, Strategy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Finite-difference instances checked by `gradcheck`.
pub const GRADCHECK_INSTANCES: usize = 50;

#[derive(Debug, Parser)]
#[command(name = "fedmoe", version, about = "Federated Mixture-of-Experts simulator with capacity-aware client-expert scheduling")]
pub struct Cli {
    /// More log output on stderr (-v: per-round lines, -vv: debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one strategy for one seed.
    Simulate(SimulateArgs),
    /// Run random, greedy and load_balanced over a list of seeds.
    Compare(CompareArgs),
    /// Check analytic model gradients against central finite differences.
    Gradcheck(CheckArgs),
    /// Check load_balanced assignment against brute-force enumeration.
    OracleCheck(CheckArgs),
    /// Write the synthetic client datasets to disk.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML configuration file (see docs/config.md). Defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Number of communication rounds.
    #[arg(long, value_name = "N", allow_negative_numbers = true,
          value_parser = clap::value_parser!(i64).range(0..=1_000_000))]
    pub rounds: Option<i64>,

    /// Output directory. Falls back to the OUT_DIR environment variable.
    #[arg(long, value_name = "PATH")]
    pub out_dir: Option<PathBuf>,

    /// Threads for per-client local training. Results do not depend on it.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..=1024))]
    pub workers: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: ConfigArgs,

    /// Master seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,

    /// random, greedy or load_balanced.
    #[arg(long, value_name = "NAME")]
    pub strategy: Option<Strategy>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: ConfigArgs,

    /// Comma-separated master seeds.
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,

    /// Absolute accuracy target in (0, 1) for rounds-to-target. Default: 80%
    /// of each seed's load_balanced final accuracy.
    #[arg(long, value_name = "FLOAT")]
    pub target: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Seed for the randomized instances.
    #[arg(long, value_name = "U64", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Master seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,

    /// Output directory. Falls back to the OUT_DIR environment variable.
    #[arg(long, value_name = "PATH")]
    pub out_dir: Option<PathBuf>,
}

/// Outcome of a subcommand that is not a plain success.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the subcommand.
///
/// `out_dir_env` is the value of `OUT_DIR`, the only environment variable
/// consulted.
pub fn run<I, T>(args: I, out_dir_env: Option<PathBuf>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    init_logging(cli.verbose);
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out_dir_env, out),
        Command::Compare(a) => cmd_compare(a, out_dir_env, out),
        Command::Gradcheck(a) => cmd_gradcheck(a.seed, None, out),
        Command::OracleCheck(a) => cmd_oracle_check(a.seed, out),
        Command::GenData(a) => cmd_gen_data(a, out_dir_env, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Reads the config file (or defaults) and applies command-line overrides.
pub fn load_config(path: Option<&Path>) -> Result<SimConfig, String> {
    let config = match path {
        None => SimConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("--config {}: {e}", p.display()))?;
            SimConfig::from_toml(&text).map_err(|e| format!("--config {}: {e}", p.display()))?
        }
    };
    Ok(config)
}

fn resolve_config(common: &ConfigArgs) -> Result<SimConfig, Failure> {
    let mut config = load_config(common.config.as_deref()).map_err(Failure::Usage)?;
    if let Some(r) = common.rounds {
        config.num_rounds = r as usize;
    }
    if let Some(w) = common.workers {
        config.workers = w as usize;
    }
    Ok(config)
}

fn out_dir(flag: &Option<PathBuf>, env: Option<PathBuf>) -> Option<PathBuf> {
    flag.clone().or(env)
}

fn print_table(summary: &ExperimentSummary, out: &mut dyn Write) {
    let _ = writeln!(
        out,
        "{:<14} {:>6} {:>9} {:>9} {:>8} {:>8} {:>8} {:>9} {:>11}",
        "strategy", "seed", "accuracy", "loss", "rounds", "load_cv", "gini", "recovery", "sim_time_s"
    );
    for r in &summary.runs {
        let rounds = r.rounds_to_target.map_or("-".to_string(), |n| n.to_string());
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>9.4} {:>9.4} {:>8} {:>8.4} {:>8.4} {:>9.4} {:>11.2}",
            r.strategy.as_str(),
            r.seed,
            r.final_accuracy,
            r.final_loss,
            rounds,
            r.load_cv,
            r.load_gini,
            r.alignment_recovery,
            r.total_time
        );
    }
}

fn finish(summary: &ExperimentSummary, out: &mut dyn Write) -> CmdResult {
    print_table(summary, out);
    if !summary.all_finite() {
        return Err(Error::NonFinite("a run produced NaN or infinite metrics".into()).into());
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(a: &SimulateArgs, env: Option<PathBuf>, out: &mut dyn Write) -> CmdResult {
    let mut config = resolve_config(&a.common)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(s) = a.strategy {
        config.strategy = s;
    }
    let _ = writeln!(out, "seed: {}", config.seed);
    let dir = out_dir(&a.common.out_dir, env);
    let summary = run_experiment(
        &config,
        &[config.strategy],
        &[config.seed],
        Target::default(),
        dir.as_deref(),
    )?;
    finish(&summary, out)
}

fn cmd_compare(a: &CompareArgs, env: Option<PathBuf>, out: &mut dyn Write) -> CmdResult {
    let config = resolve_config(&a.common)?;
    let target = match a.target {
        None => Target::default(),
        Some(t) if t > 0.0 && t < 1.0 => Target::Absolute(t),
        Some(t) => return Err(Failure::Usage(format!("--target {t} not in (0, 1)"))),
    };
    let seeds: Vec<String> = a.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "seeds: {}", seeds.join(","));
    let dir = out_dir(&a.common.out_dir, env);
    let summary = run_experiment(&config, &Strategy::ALL, &a.seeds, target, dir.as_deref())?;
    finish(&summary, out)?;
    let _ = writeln!(out);
    for s in Strategy::ALL {
        if let Some(m) = summary.mean_final_accuracy(s) {
            let _ = writeln!(out, "mean accuracy {:<14} {:.4}", s.as_str(), m);
        }
    }
    Ok(EXIT_OK)
}

/// `gradcheck`, with an optional parameter perturbation applied before the
/// numeric derivatives are taken (used to exercise the failure path).
pub fn cmd_gradcheck_with(seed: u64, tamper: Option<&dyn Fn(&mut MoEParams)>, out: &mut dyn Write) -> i32 {
    match cmd_gradcheck(seed, tamper, out) {
        Ok(code) => code,
        Err(Failure::Usage(m)) | Err(Failure::Runtime(m)) => {
            let _ = writeln!(out, "error: {m}");
            EXIT_FAILURE
        }
    }
}

fn cmd_gradcheck(seed: u64, tamper: Option<&dyn Fn(&mut MoEParams)>, out: &mut dyn Write) -> CmdResult {
    let report = gradcheck::run_suite(seed, GRADCHECK_INSTANCES, tamper)?;
    let _ = writeln!(
        out,
        "instances: {}  parameters checked: {}  skipped: {}",
        report.instances, report.checked, report.skipped
    );
    let _ = writeln!(
        out,
        "max relative error: {:.3e} (tolerance {:.0e})",
        report.max_rel_error,
        gradcheck::TOLERANCE
    );
    if let Some(w) = &report.worst {
        let _ = writeln!(
            out,
            "worst: instance {} parameter {} analytic {:.9e} numeric {:.9e}",
            w.instance, w.parameter, w.analytic, w.numeric
        );
    }
    if report.passed() {
        let _ = writeln!(out, "gradcheck: PASS");
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(out, "gradcheck: FAIL");
        Ok(EXIT_FAILURE)
    }
}

fn cmd_oracle_check(seed: u64, out: &mut dyn Write) -> CmdResult {
    let instances = oracle::enumerate_instances(seed);
    let report = oracle::check_instances(&instances)?;
    let _ = writeln!(
        out,
        "instances: {}  client selections checked: {}  mismatches: {}",
        report.instances, report.clients_checked, report.mismatches
    );
    if let Some(m) = &report.first_mismatch {
        let _ = writeln!(out, "first counterexample (client {}):", m.client);
        let _ = writeln!(out, "  scheduler picked {:?}, brute force {:?}", m.scheduler, m.oracle);
        let _ = writeln!(out, "  {:#?}", m.instance);
    }
    if report.passed() {
        let _ = writeln!(out, "oracle-check: PASS");
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(out, "oracle-check: FAIL");
        Ok(EXIT_FAILURE)
    }
}

fn cmd_gen_data(a: &GenDataArgs, env: Option<PathBuf>, out: &mut dyn Write) -> CmdResult {
    let mut config = load_config(a.config.as_deref()).map_err(Failure::Usage)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.validate()?;
    let Some(dir) = out_dir(&a.out_dir, env) else {
        return Err(Failure::Usage("gen-data needs --out-dir (or OUT_DIR)".into()));
    };
    let _ = writeln!(out, "seed: {}", config.seed);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    // Same derivation as the simulator, so exported data matches a run's data.
    let tasks = gen_tasks(&config.data.task_params(), derive_seed(config.seed, crate::federation::TAG_TASKS))?;
    let clients = gen_client_data(
        &tasks,
        config.data.num_clients,
        config.data.samples_per_client,
        config.data.partition,
        derive_seed(config.seed, crate::federation::TAG_CLIENTS),
    )?;
    for client in &clients {
        export::write_client(&dir, client, config.data.num_classes, config.seed)?;
    }
    let _ = writeln!(out, "wrote {} clients to {}", clients.len(), dir.display());
    Ok(EXIT_OK)
}
