use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fedmoe::moe::MoEParams;

const TINY: &str = r#"
num_rounds = 3
clients_per_round = 4

[data]
num_clients = 4
num_experts = 2
num_tasks = 2
input_dim = 4
samples_per_client = 40
test_samples = 50

[warm_start]
samples = 16
"#;

fn fedmoe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedmoe"))
        .args(args)
        .env_remove("OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn help_and_version_exit_zero() {
    let o = fedmoe(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("compare"));
    assert_eq!(fedmoe(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(fedmoe(&["simulate", "--fast"]).status.code(), Some(2));
    assert_eq!(fedmoe(&["simulate", "--rounds", "-3"]).status.code(), Some(2));
    assert_eq!(fedmoe(&["simulate", "--config", "/nonexistent/x.toml"]).status.code(), Some(2));
    assert_eq!(fedmoe(&["bogus"]).status.code(), Some(2));
    let o = fedmoe(&["gen-data"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("out-dir"));
}

#[test]
fn invalid_config_value_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[scheduler]\nalpha = 2.0\n").unwrap();
    let o = fedmoe(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("run");
    let o = fedmoe(&["simulate", "--config", &config, "--seed", "4", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("seed: 4\n"));
    for f in ["manifest.json", "metrics.csv", "summary.csv", "heatmap.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    let (header, params): (_, MoEParams) = fedmoe::moe::checkpoint::read(&out.join("checkpoints/load_balanced_seed4.ckpt")).unwrap();
    assert_eq!(header.seed, 4);
    assert_eq!(params.dims.num_experts, 2);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_fedmoe"))
        .args(["simulate", "--config", &config])
        .env("OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("summary.csv").is_file());
}

#[test]
fn rerun_into_foreign_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert_eq!(fedmoe(&["simulate", "--config", &config, "--out-dir", out]).status.code(), Some(0));
    // same manifest: allowed
    assert_eq!(fedmoe(&["simulate", "--config", &config, "--out-dir", out]).status.code(), Some(0));
    let o = fedmoe(&["simulate", "--config", &config, "--seed", "9", "--out-dir", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("manifest"));
}

#[test]
fn gen_data_writes_every_client() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("data");
    let o = fedmoe(&["gen-data", "--config", &config, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for c in 0..4 {
        let (_, data) = fedmoe::datagen::export::read_client(&out, c).unwrap();
        assert_eq!(data.data.len(), 40);
    }
}

#[test]
fn gradcheck_passes_and_tampering_fails_with_location() {
    let o = fedmoe(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("gradcheck: PASS"));

    let tamper = |g: &mut MoEParams| g.gate.bias[0] += 0.01;
    let mut out = Vec::new();
    let code = fedmoe::cli::cmd_gradcheck_with(0, Some(&tamper), &mut out);
    let text = String::from_utf8(out).unwrap();
    assert_eq!(code, 1);
    assert!(text.contains("gradcheck: FAIL"));
    assert!(text.contains("parameter gate.bias[0]"), "{text}");
}

#[test]
fn oracle_check_reports_instances() {
    let o = fedmoe(&["oracle-check", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("mismatches: 0"));
}

#[test]
fn bundled_bench_config_is_the_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/bench.toml");
    let text = fs::read_to_string(path).unwrap();
    let parsed = fedmoe::federation::SimConfig::from_toml(&text).unwrap();
    assert_eq!(parsed, fedmoe::federation::SimConfig::default());
}
