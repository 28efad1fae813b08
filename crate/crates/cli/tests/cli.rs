use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn tvcorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvcorr"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = tvcorr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {stderr}");
    serde_json::from_str(lines[0]).expect("JSON error line")
}

fn simulate(dir: &TempDir, seed: &str) -> String {
    let out = dir.path().to_str().unwrap();
    ok(&["simulate", "--case", "1", "--n", "450", "--seed", seed, "--out", out]);
    dir.path().join("panel.csv").to_str().unwrap().to_string()
}

#[test]
fn alpha_out_of_range_is_a_usage_error() {
    let out = tvcorr(&["analyze", "--case", "1", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = tvcorr(&["analyze", "--case", "1", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_emit_kind_is_a_usage_error() {
    let out = tvcorr(&["analyze", "--case", "1", "--emit", "pdf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let out = tvcorr(&[
        "analyze",
        "--input",
        "/no/such/panel.csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "io");
}

#[test]
fn too_short_panel_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("tiny.csv");
    fs::write(&input, "a,b\n1,2\n3,4\n5,7\n").unwrap();
    let out = tvcorr(&["analyze", "--input", input.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    error_line(&out);
}

#[test]
fn analyze_writes_fifteen_pvalues_per_snapshot_deterministically() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        ok(&[
            "analyze",
            "--case",
            "1",
            "--n",
            "450",
            "--seed",
            "7",
            "--B",
            "500",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
    }
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("networks.json")).unwrap()).unwrap();
    let snaps = doc["snapshots"].as_array().unwrap();
    assert!(!snaps.is_empty());
    for s in snaps {
        assert_eq!(s["pvalues"].as_array().unwrap().len(), 15);
    }
    for name in ["networks.json", "pvalues.csv", "tuning.json"] {
        assert_eq!(digest(&a.path().join(name)), digest(&b.path().join(name)), "{name}");
    }
}

#[test]
fn bootstrap_seed_changes_pvalues() {
    let data = TempDir::new().unwrap();
    let input = simulate(&data, "7");
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for (dir, seed) in [(&a, "7"), (&b, "8")] {
        ok(&["analyze", "--input", &input, "--seed", seed, "--B", "200", "--out", dir.path().to_str().unwrap()]);
    }
    assert_ne!(digest(&a.path().join("pvalues.csv")), digest(&b.path().join("pvalues.csv")));
}

#[test]
fn simulated_csv_round_trips_through_analyze() {
    let data = TempDir::new().unwrap();
    let input = simulate(&data, "11");
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    ok(&["analyze", "--input", &input, "--seed", "3", "--B", "200", "--out", a.path().to_str().unwrap()]);
    ok(&[
        "analyze",
        "--case",
        "1",
        "--n",
        "450",
        "--sim-seed",
        "11",
        "--seed",
        "3",
        "--B",
        "200",
        "--out",
        b.path().to_str().unwrap(),
    ]);
    for name in ["pvalues.csv", "networks.json", "tuning.json"] {
        assert_eq!(digest(&a.path().join(name)), digest(&b.path().join(name)), "{name}");
    }
}

#[test]
fn worker_count_does_not_change_outputs() {
    let data = TempDir::new().unwrap();
    let input = simulate(&data, "5");
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for (dir, workers) in [(&a, "1"), (&b, "3")] {
        ok(&[
            "analyze",
            "--input",
            &input,
            "--B",
            "200",
            "--workers",
            workers,
            "--emit",
            "estimates",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
    }
    for name in ["pvalues.csv", "networks.json", "estimates.csv"] {
        assert_eq!(digest(&a.path().join(name)), digest(&b.path().join(name)), "{name}");
    }
}

#[test]
fn experiment_table_has_rep_rows_and_mean_row() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "experiment",
        "--case",
        "1",
        "--n",
        "450",
        "--reps",
        "5",
        "--B",
        "200",
        "--emit",
        "trajectories,svg",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let text = fs::read_to_string(dir.path().join("experiment.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "rep,maxFDP,avgFDP,maxFNP,avgFNP");
    assert_eq!(rows.len(), 1 + 5 + 1);
    assert!(rows[6].starts_with("mean,"));
    assert!(dir.path().join("experiment_trajectory.csv").exists());
    assert!(fs::read_to_string(dir.path().join("experiment_trajectory.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn strict_baseline_threshold_keeps_fdp_low() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "baseline",
        "--case",
        "1",
        "--n",
        "600",
        "--reps",
        "25",
        "--threshold",
        "0.3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let text = fs::read_to_string(dir.path().join("baseline.csv")).unwrap();
    let mean = text.lines().last().unwrap();
    let avg_fdp: f64 = mean.split(',').nth(2).unwrap().parse().unwrap();
    assert!(avg_fdp < 0.02, "avg FDP {avg_fdp}");
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = TempDir::new().unwrap();
    let input = simulate(&dir, "2");
    let conf = dir.path().join("run.conf");
    fs::write(&conf, format!("input = {input}\nB = 200\nalpha = 0.05\nrule = by\n")).unwrap();
    ok(&["analyze", "--config", conf.to_str().unwrap(), "--alpha", "0.2", "--out", dir.path().to_str().unwrap()]);
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("networks.json")).unwrap()).unwrap();
    assert_eq!(doc["alpha"], 0.2);
    assert_eq!(doc["rule"], "BY");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["B"], 200);
}

#[test]
fn tune_reports_selected_parameters() {
    let dir = TempDir::new().unwrap();
    let out = ok(&["tune", "--case", "2", "--n", "450", "--out", dir.path().to_str().unwrap()]);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("tuning.json")).unwrap()).unwrap();
    assert_eq!(summary["lag"], 13);
    assert_eq!(summary["bandwidths"].as_array().unwrap().len(), 9);
    assert!(String::from_utf8_lossy(&out.stdout).contains("eta"));
}
