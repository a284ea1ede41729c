//! Command-line surface: exit codes, file outputs, reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carbonsched"))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

fn fixture(name: &str) -> PathBuf {
    repo_root().join("fixtures").join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn carbonsched");
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn simulate_writes_result_files() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(bin()
        .arg("--config")
        .arg(fixture("run.toml"))
        .arg("simulate")
        .arg("--trace")
        .arg(fixture("canonical_bursty.jsonl"))
        .arg("--catalog")
        .arg(fixture("catalog.toml"))
        .arg("--intensity")
        .arg(fixture("intensity.json"))
        .arg("--output-dir")
        .arg(dir.path()));
    for file in ["metrics.json", "schedule.csv", "provenance.csv", "telemetry.csv"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
}

#[test]
fn simulate_missing_trace_exits_2_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("simulate")
        .arg("--trace")
        .arg("/nonexistent/trace.jsonl")
        .arg("--catalog")
        .arg(fixture("catalog.toml"))
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/nonexistent/trace.jsonl"), "{stderr}");
}

#[test]
fn simulate_twice_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        run_ok(bin()
            .arg("--config")
            .arg(fixture("run.toml"))
            .arg("simulate")
            .arg("--trace")
            .arg(fixture("canonical_bursty.jsonl"))
            .arg("--catalog")
            .arg(fixture("catalog.toml"))
            .arg("--intensity")
            .arg(fixture("intensity.json"))
            .arg("--output-dir")
            .arg(dir.path()));
    }
    for file in ["metrics.json", "schedule.csv", "provenance.csv", "telemetry.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between runs");
    }
}

#[test]
fn sweep_deadline_scales_monotone() {
    // A small trace the exact solver accepts whole.
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"
duration_us = 5000
base_rate = 1200.0
burst_rate = 1200.0
burst_duty = 0.0
burst_period_us = 1000
seed = 3

[apps.A1]
weight = 1.0
work = { kind = "uniform", lo = 500.0, hi = 3000.0 }
deadline_us = { kind = "fixed", value = 4000.0 }
speedup = { CPU = 1.0, FPGA = 2.0 }
"#;
    let spec_path = dir.path().join("spec.toml");
    std::fs::write(&spec_path, spec).unwrap();
    let trace_path = dir.path().join("small.jsonl");
    run_ok(bin()
        .arg("gen-trace")
        .arg(&spec_path)
        .arg("--output")
        .arg(&trace_path));

    run_ok(bin()
        .arg("sweep")
        .arg("--trace")
        .arg(&trace_path)
        .arg("--catalog")
        .arg(fixture("catalog.toml"))
        .arg("--deadline-scales")
        .arg("1,2,4")
        .arg("--output-dir")
        .arg(dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let costs: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(costs.len(), 3);
    assert!(costs[1] <= costs[0] && costs[2] <= costs[1], "{costs:?}");
}

#[test]
fn sweep_policy_axis_lists_all_policies() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(bin()
        .arg("--config")
        .arg(fixture("run.toml"))
        .arg("sweep")
        .arg("--trace")
        .arg(fixture("canonical_bursty.jsonl"))
        .arg("--catalog")
        .arg(fixture("catalog.toml"))
        .arg("--intensity")
        .arg(fixture("intensity.json"))
        .arg("--policies")
        .arg("mufunction-exact,mufunction-heuristic,faas-baseline,round-robin,no-defer")
        .arg("--output-dir")
        .arg(dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6); // header + five policies
}

#[test]
fn sweep_empty_axis_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("sweep")
        .arg("--trace")
        .arg(fixture("canonical_bursty.jsonl"))
        .arg("--catalog")
        .arg(fixture("catalog.toml"))
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_recovers_synthetic_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    // y = 2e-9 a + 5e-8 b + 0.25
    let mut csv = String::from("a,b,measured_j\n");
    let mut x: u64 = 12345;
    for _ in 0..200 {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let a = (x >> 20) as f64;
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let b = (x >> 20) as f64;
        let y = 2e-9 * a + 5e-8 * b + 0.25;
        csv.push_str(&format!("{a},{b},{y}\n"));
    }
    let telemetry = dir.path().join("telemetry.csv");
    std::fs::write(&telemetry, csv).unwrap();
    run_ok(bin()
        .arg("fit")
        .arg(&telemetry)
        .arg("--output-dir")
        .arg(dir.path()));
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json")).unwrap())
            .unwrap();
    let a = model["coefficients"]["a"].as_f64().unwrap();
    let b = model["coefficients"]["b"].as_f64().unwrap();
    assert!((a - 2e-9).abs() <= 1e-6 * 2e-9, "a = {a}");
    assert!((b - 5e-8).abs() <= 1e-6 * 5e-8, "b = {b}");
}

#[test]
fn fit_single_row_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let telemetry = dir.path().join("telemetry.csv");
    std::fs::write(&telemetry, "a,measured_j\n1.0,2.0\n").unwrap();
    let out = bin()
        .arg("fit")
        .arg(&telemetry)
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_duplicate_columns_exit_3_naming_them() {
    let dir = tempfile::tempdir().unwrap();
    let telemetry = dir.path().join("telemetry.csv");
    let mut csv = String::from("a,b,measured_j\n");
    for i in 0..50 {
        let v = i as f64;
        csv.push_str(&format!("{v},{v},{}\n", 3.0 * v));
    }
    std::fs::write(&telemetry, csv).unwrap();
    let out = bin()
        .arg("fit")
        .arg(&telemetry)
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains('b'), "{stderr}");
}

#[test]
fn generated_trace_validates_clean() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    run_ok(bin()
        .arg("gen-trace")
        .arg(fixture("trace_spec.toml"))
        .arg("--seed")
        .arg("55")
        .arg("--output")
        .arg(&trace));
    run_ok(bin()
        .arg("validate")
        .arg("--trace")
        .arg(&trace)
        .arg("--catalog")
        .arg(fixture("catalog.toml"))
        .arg("--intensity")
        .arg(fixture("intensity.json")));
}

#[test]
fn validate_cyclic_parents_names_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("cyclic.jsonl");
    let a = r#"{"id":"a","app_id":"A1","arrival_us":0,"work":1.0,"speedup":{"CPU":1.0},"sla":{"deadline_us":1000,"percentile":1.0},"parent":"b"}"#;
    let b = r#"{"id":"b","app_id":"A1","arrival_us":0,"work":1.0,"speedup":{"CPU":1.0},"sla":{"deadline_us":1000,"percentile":1.0},"parent":"a"}"#;
    std::fs::write(&trace, format!("{a}\n{b}\n")).unwrap();
    let out = bin().arg("validate").arg("--trace").arg(&trace).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("cycle"), "{stderr}");
}

#[test]
fn validate_reports_all_failures_not_just_first() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = dir.path().join("bad.toml");
    std::fs::write(
        &catalog,
        r#"
[[devices]]
id = "d0"
kind = "CPU"
peak_power = 0.0
capacity = 0.0
"#,
    )
    .unwrap();
    let out = bin()
        .arg("validate")
        .arg("--catalog")
        .arg(&catalog)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("peak_power"), "{stderr}");
    assert!(stderr.contains("capacity"), "{stderr}");
}

#[test]
fn unknown_flag_fails() {
    let out = bin().arg("simulate").arg("--frobnicate").output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn help_lists_subcommands() {
    let out = run_ok(bin().arg("--help"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for sub in ["simulate", "sweep", "fit", "gen-trace", "validate"] {
        assert!(stdout.contains(sub), "missing {sub}");
    }
}

#[test]
fn outdir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(bin()
        .env("CARBONSCHED_OUTDIR", dir.path())
        .arg("simulate")
        .arg("--trace")
        .arg(fixture("canonical_bursty.jsonl"))
        .arg("--catalog")
        .arg(fixture("catalog.toml"))
        .arg("--intensity")
        .arg(fixture("intensity.json"))
        .arg("--horizon-us")
        .arg("1500000"));
    assert!(dir.path().join("metrics.json").exists());
}
