use std::path::Path;
use std::process::{Command, Output};

use cran_cache::experiments::ExperimentConfig;
use cran_cache::ProblemConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cran-cache"))
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut config = ExperimentConfig::paper_geometry(4, 2, 2);
    let noise = config.problem.noise[0];
    config.problem = ProblemConfig {
        noise: vec![noise; 4],
        cache_budget: 40.0,
        seed: 3,
        ..ProblemConfig::uniform(2, 2, 4, 2, 2)
    };
    config.distances = vec![160.0, 360.0, 200.0, 320.0];
    config.eval_realizations = 2;
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

#[test]
fn missing_config_fails_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["solve-cache", "--config", "/nonexistent/config.json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = error_json(&out);
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("/nonexistent/config.json"));
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_config(dir.path());
    let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    value["distances"] = serde_json::json!([100.0]);
    std::fs::write(&path, value.to_string()).unwrap();
    let out = bin().args(["generate-channels", "--config"]).arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert_eq!(error_json(&out)["error"], "invalid_config");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "usage");
}

#[test]
fn solve_then_round_then_deliver() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let run = |args: &[&str]| {
        let out = bin().args(args).arg("--config").arg(&config).arg("--out").arg(dir.path()).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["solve-cache", "--trace"]);
    let cache_file = dir.path().join("cache.json");
    run(&["round-cache", "--input", cache_file.to_str().unwrap()]);
    let rounded: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cache_rounded.json")).unwrap()).unwrap();
    let total: i64 = rounded["cache"].as_array().unwrap().iter().map(|x| x.as_i64().unwrap()).sum();
    assert!(total <= 40);
    let rounded_file = dir.path().join("cache_rounded.json");
    run(&["solve-mcmb", "--cache", rounded_file.to_str().unwrap(), "--realization", "1"]);
    let delivery: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("delivery.json")).unwrap()).unwrap();
    assert!(delivery["sum_rate"].as_f64().unwrap() > 0.0);
    let trace = std::fs::read_to_string(dir.path().join("cache_trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective"));
}

#[test]
fn realization_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = bin()
        .args(["solve-mcmb", "--realization", "99", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert_eq!(error_json(&out)["error"], "invalid_input");
}
