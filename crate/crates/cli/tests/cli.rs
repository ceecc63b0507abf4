//! End-to-end tests driving the compiled binary.

use std::io::Write;
use std::process::{Command, Output};

use serde::{Deserialize, Serialize};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mipform"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_temp(name: &str, contents: &str) -> std::path::PathBuf {
    let path = std::env::temp_dir().join(format!("mipform-test-{}-{name}", std::process::id()));
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    path
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct RunJson {
    model: String,
    algorithm: String,
    approximate: bool,
    stage: Option<usize>,
    levels: Vec<Vec<f64>>,
    report: Option<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
struct CompareJson {
    stage: usize,
    total_tv: f64,
}

#[test]
fn run_mm1_upper_matches_geometric() {
    let out = run_ok(&[
        "run", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2",
        "--algorithm", "upper", "--epsilon", "1e-8",
    ]);
    let parsed: RunJson = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed.algorithm, "upper");
    assert!(!parsed.approximate);
    let mut tv = 0.0;
    for (i, level) in parsed.levels.iter().enumerate() {
        tv += (level[0] - 0.5_f64.powi(i as i32 + 1)).abs();
    }
    assert!(tv <= 1e-6, "tv to geometric {tv:e}");
}

#[test]
fn json_output_round_trips() {
    let out = run_ok(&[
        "run", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2",
        "--algorithm", "lower", "--epsilon", "1e-6",
    ]);
    let first: RunJson = serde_json::from_slice(&out.stdout).unwrap();
    let re_emitted = serde_json::to_string(&first).unwrap();
    let second: RunJson = serde_json::from_str(&re_emitted).unwrap();
    assert_eq!(first, second);
}

#[test]
fn oracle_agrees_with_solver_output() {
    let solver = run_ok(&[
        "run", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2",
        "--algorithm", "upper", "--epsilon", "1e-10",
    ]);
    let solver: RunJson = serde_json::from_slice(&solver.stdout).unwrap();
    let stage = solver.stage.unwrap().to_string();
    let oracle = run_ok(&[
        "run", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2",
        "--algorithm", "oracle", "--max-level", &stage,
    ]);
    let oracle: RunJson = serde_json::from_slice(&oracle.stdout).unwrap();
    let mut tv = 0.0;
    for (a, b) in solver.levels.iter().flatten().zip(oracle.levels.iter().flatten()) {
        tv += (a - b).abs();
    }
    assert!(tv <= 1e-9, "solver vs oracle tv {tv:e}");
}

#[test]
fn max_level_reached_exits_two_with_result() {
    let out = bin()
        .args([
            "run", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2",
            "--algorithm", "upper", "--epsilon", "1e-12", "--max-level", "4",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let parsed: RunJson = serde_json::from_slice(&out.stdout).unwrap();
    assert!(parsed.approximate);
    assert_eq!(parsed.levels.len(), 5);
}

#[test]
fn bad_model_file_exits_one_with_diagnostic() {
    let path = write_temp(
        "overlap.json",
        r#"{
            "level_sizes": {"tail": 1},
            "blocks": [
                {"k": "tail", "l_offset": 0, "entries": [[-1.0]]},
                {"k": "tail", "l_offset": 0, "entries": [[-2.0]]}
            ]
        }"#,
    );
    let out = bin()
        .args(["run", "--model", path.to_str().unwrap(), "--algorithm", "upper"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("InvalidFile"), "stderr: {stderr}");
    std::fs::remove_file(path).ok();
}

#[test]
fn structure_mismatch_is_rejected_before_compute() {
    let out = bin()
        .args([
            "run", "--builtin", "catastrophe_qbd", "--param", "lambda=4", "--param", "mu=0.7",
            "--param", "gamma=0.25", "--algorithm", "upper",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("StructureMismatch"));
}

#[test]
fn unstable_params_exit_one() {
    let out = bin()
        .args([
            "run", "--builtin", "mm1", "--param", "lambda=2", "--param", "mu=1",
            "--algorithm", "upper",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("UnstableParams"));
}

#[test]
fn compare_identical_configs_is_zero() {
    let out = run_ok(&[
        "compare", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2",
        "--algorithm-a", "upper", "--algorithm-b", "upper", "--stage", "10",
    ]);
    let parsed: CompareJson = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed.stage, 10);
    assert_eq!(parsed.total_tv, 0.0);
}

#[test]
fn compare_upper_vs_oracle_is_tiny() {
    let out = run_ok(&[
        "compare", "--builtin", "level_dep_qbd", "--param", "lambda=1", "--param", "mu=1",
        "--param", "c=3", "--algorithm-a", "upper", "--algorithm-b", "oracle", "--stage", "15",
    ]);
    let parsed: CompareJson = serde_json::from_slice(&out.stdout).unwrap();
    assert!(parsed.total_tv <= 1e-9, "tv {:e}", parsed.total_tv);
}

#[test]
fn compare_gim1_vs_lower_is_tiny() {
    let out = run_ok(&[
        "compare", "--builtin", "gim1_type", "--param", "lambda=1", "--param", "mu=2",
        "--param", "r=0.5", "--algorithm-a", "gim1", "--algorithm-b", "lower", "--stage", "12",
    ]);
    let parsed: CompareJson = serde_json::from_slice(&out.stdout).unwrap();
    assert!(parsed.total_tv <= 1e-12, "tv {:e}", parsed.total_tv);
}

#[test]
fn compare_rejects_mismatched_partitions() {
    // the conditional head has 3 levels, the stagewise output has 11
    let out = bin()
        .args([
            "compare", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2",
            "--algorithm-a", "takine", "--algorithm-b", "upper", "--stage", "10",
            "--takine-n", "2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ShapeMismatch"));
}

#[test]
fn csv_output_emits_one_row_per_state() {
    let out = run_ok(&[
        "run", "--builtin", "gim1_type", "--param", "lambda=1", "--param", "mu=2",
        "--param", "r=0.5", "--algorithm", "lower", "--epsilon", "1e-6", "--output", "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("level,phase,probability"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("0,0,"), "first row: {first}");
    // two phases per level in this model
    assert!(text.lines().any(|l| l.starts_with("1,1,")));
}

#[test]
fn bound_subcommand_reports_depth_and_verifies() {
    let cert = write_temp(
        "cert.json",
        r#"{
            "b": 1.5,
            "C": [0, 1, 2, 3, 4],
            "f": {"prefix": [1.0, 1.0, 1.0, 1.0, 1.0, 1.265625], "tail_ratio": 1.5, "tail_start": 6},
            "v_description": "v(i) = 1.5^i"
        }"#,
    );
    let v: Vec<f64> = (0..60).map(|i| 1.5_f64.powi(i)).collect();
    let lyapunov = write_temp("lyapunov.json", &serde_json::to_string(&v).unwrap());
    let out = run_ok(&[
        "bound", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2",
        "--cert", cert.to_str().unwrap(), "--epsilon", "1e-4",
        "--lyapunov", lyapunov.to_str().unwrap(), "--max-level", "40",
    ]);
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let n = parsed["n_epsilon"].as_u64().unwrap();
    // the analytic mm1 tail 2*2^-N must fit the budget at the certified depth
    assert!(2.0 * 0.5_f64.powi(n as i32) <= 1e-4);
    assert!(parsed["drift_violation"].is_null());
    std::fs::remove_file(cert).ok();
    std::fs::remove_file(lyapunov).ok();
}

#[test]
fn thread_env_is_validated() {
    let out = bin()
        .args(["run", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2", "--algorithm", "upper"])
        .env("HESSENBERG_MAX_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let ok = bin()
        .args(["run", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2", "--algorithm", "upper"])
        .env("HESSENBERG_MAX_THREADS", "1")
        .output()
        .unwrap();
    assert!(ok.status.success());
}

#[test]
fn file_model_runs_like_builtin() {
    let path = write_temp(
        "mm1.json",
        r#"{
            "level_sizes": {"prefix": [1], "tail": 1},
            "blocks": [
                {"k": 0, "l_offset": 0, "entries": [[-1.0]]},
                {"k": 0, "l_offset": 1, "entries": [[1.0]]},
                {"k": "tail", "l_offset": -1, "entries": [[2.0]]},
                {"k": "tail", "l_offset": 0, "entries": [[-3.0]]},
                {"k": "tail", "l_offset": 1, "entries": [[1.0]]}
            ],
            "structure_hint": "general"
        }"#,
    );
    let out = run_ok(&[
        "run", "--model", path.to_str().unwrap(), "--algorithm", "gim1", "--epsilon", "1e-8",
    ]);
    let parsed: RunJson = serde_json::from_slice(&out.stdout).unwrap();
    let mut tv = 0.0;
    for (i, level) in parsed.levels.iter().enumerate() {
        tv += (level[0] - 0.5_f64.powi(i as i32 + 1)).abs();
    }
    assert!(tv <= 1e-6, "file-model gim1 tv {tv:e}");
    std::fs::remove_file(path).ok();
}

#[test]
fn takine_run_produces_conditional_head() {
    let out = run_ok(&[
        "run", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2",
        "--algorithm", "takine", "--takine-n", "3", "--takine-s", "30",
    ]);
    let parsed: RunJson = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed.levels.len(), 4);
    let head: f64 = (0..4).map(|i| 0.5_f64.powi(i + 1)).sum();
    for (i, level) in parsed.levels.iter().enumerate() {
        assert!((level[0] - 0.5_f64.powi(i as i32 + 1) / head).abs() <= 1e-8);
    }
}

#[test]
fn qbd_r_run_matches_geometric_head() {
    let out = run_ok(&[
        "run", "--builtin", "mm1", "--param", "lambda=1", "--param", "mu=2",
        "--algorithm", "qbd-r", "--qbd-n", "10", "--qbd-l", "60",
    ]);
    let parsed: RunJson = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed.levels.len(), 11);
    let head: f64 = (0..11).map(|i| 0.5_f64.powi(i + 1)).sum();
    for (i, level) in parsed.levels.iter().enumerate() {
        assert!((level[0] - 0.5_f64.powi(i as i32 + 1) / head).abs() <= 1e-9);
    }
}
