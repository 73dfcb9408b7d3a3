//! The `nngp-solve` binary: exit codes, outputs and settings precedence.

use std::path::Path;
use std::process::{Command, Output};

use nngp_experiments::RunRecord;

fn solve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nngp-solve")).args(args).output().unwrap()
}

/// Small enough to finish in well under a second.
const QUICK: &str = "
[validate_kernels]
theta_points = 5
max_depth = 2
nodes = 64
";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn successful_run_writes_tables_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "quick.toml", QUICK);
    let out = dir.path().join("out");
    let o = solve(&["validate-kernels", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(out.join("validate-kernels/kernel_validation.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("nonlinearity,theta,layer,analytic,numeric,absdiff"));
    assert_eq!(lines.count(), 2 * 3 * 5);
    let record: RunRecord =
        serde_json::from_slice(&std::fs::read(out.join("validate-kernels/run.json")).unwrap()).unwrap();
    assert_eq!(record.config.seed, 4);
    assert_eq!(record.config.validate_kernels.theta_points, 5);
    assert!(record.passed());
}

#[test]
fn kernel_filter_limits_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "quick.toml", QUICK);
    let out = dir.path().join("out");
    let o = solve(&["validate-kernels", "--config", &cfg, "--out", out.to_str().unwrap(), "--kernel", "erf"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("validate-kernels/kernel_validation.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("erf,")));
}

#[test]
fn missed_threshold_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "strict.toml", &format!("{QUICK}tolerance = 1e-30\n"));
    let out = dir.path().join("out");
    let o = solve(&["validate-kernels", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("validate-kernels/run.json").exists());
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "unknown.toml", "seeed = 1\n");
    assert_eq!(solve(&["poisson", "--config", &unknown]).status.code(), Some(2));
    let wrong = write(dir.path(), "wrong.toml", "experiment = \"burgers\"\n");
    assert_eq!(solve(&["poisson", "--config", &wrong]).status.code(), Some(2));
    let invalid = write(dir.path(), "invalid.toml", "[approx_hartmann]\ntrain_fraction = 2.0\n");
    assert_eq!(solve(&["approx-hartmann", "--config", &invalid]).status.code(), Some(2));
    assert_eq!(solve(&["poisson", "--config", "/nonexistent/cfg.toml"]).status.code(), Some(2));
    assert_eq!(solve(&["poisson", "--preset", "fast"]).status.code(), Some(2));
    assert_eq!(solve(&["poisson", "--kernel", "tanh"]).status.code(), Some(2));
    assert_eq!(solve(&["approx-step", "--kernel", "se", "--depth", "2"]).status.code(), Some(2));
    assert_eq!(solve(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn preset_overrides_file_and_flags_override_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("seed = 9\n[training]\nrestarts = 2\n{QUICK}"));
    let out = dir.path().join("out");
    let o = solve(&[
        "validate-kernels",
        "--config",
        &cfg,
        "--preset",
        "paper",
        "--seed",
        "11",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let record: RunRecord =
        serde_json::from_slice(&std::fs::read(out.join("validate-kernels/run.json")).unwrap()).unwrap();
    assert_eq!(record.config.training.restarts, 10);
    assert_eq!(record.config.seed, 11);
    assert_eq!(record.config.validate_kernels.theta_points, 5);
}

#[test]
fn reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "step.toml",
        "[training]\nrestarts = 2\nmax_evals = 30\n[approx_step]\ndepths = [1]\n",
    );
    let read = |name: &str| {
        let out = dir.path().join(name);
        solve(&["approx-step", "--config", &cfg, "--out", out.to_str().unwrap(), "--kernel", "relu"]);
        std::fs::read(out.join("approx-step/step_predictions.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}
