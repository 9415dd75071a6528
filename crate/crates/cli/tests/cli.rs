//! End-to-end tests driving the `fv` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fv() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fv"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fv_cli_{name}"));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_three_state_model(dir: &Path) -> PathBuf {
    let path = dir.join("model.json");
    fs::write(
        &path,
        r#"{"states": 3, "Q": [[0,0,0],[4,-6,2],[1,6,-7]]}"#,
    )
    .unwrap();
    path
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn validate_accepts_the_three_state_model() {
    let dir = tmp_dir("validate_ok");
    let model = write_three_state_model(&dir);
    let out = fv().args(["validate", "--model"]).arg(&model).output().unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("n=2"), "{stdout}");
    assert!(stdout.contains("communicating"));
    assert!(stdout.contains("cemetery reachable"));
}

#[test]
fn validate_rejects_malformed_json() {
    let dir = tmp_dir("validate_parse");
    let path = dir.join("model.json");
    fs::write(&path, "{ not json").unwrap();
    let out = fv().args(["validate", "--model"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("parse"), "{}", stderr_of(&out));
}

#[test]
fn validate_reports_negative_off_diagonal_with_indices() {
    let dir = tmp_dir("validate_neg");
    let path = dir.join("model.json");
    fs::write(
        &path,
        r#"{"states": 3, "Q": [[0,0,0],[4,-3,-1],[1,6,-7]]}"#,
    )
    .unwrap();
    let out = fv().args(["validate", "--model"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("NegativeOffDiagonal"), "{err}");
    assert!(err.contains("(1,2)"), "{err}");
}

#[test]
fn exact_report_carries_the_golden_values() {
    let dir = tmp_dir("exact");
    let model = write_three_state_model(&dir);
    let out = fv()
        .args(["exact", "--model"])
        .arg(&model)
        .args(["--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("exact_report.json")).unwrap()).unwrap();
    let close = |v: &serde_json::Value, want: f64| (v.as_f64().unwrap() - want).abs() < 1e-9;
    assert!(close(&report["pair_stationary"][0], 7.0 / 13.0));
    assert!(close(&report["pair_stationary"][1], 2.0 / 13.0));
    assert!(close(&report["race_f"][0][1], 5.0 / 13.0));
    assert!(close(&report["race_f"][1][0], 8.0 / 13.0));
    assert!(close(&report["spine_marginal"][0], 111.0 / 169.0));
    assert!(close(&report["qsd"]["nu"][0], 2.0 / 3.0));
    assert!(close(&report["qsd"]["lambda_inf"], 3.0));
    assert!(close(&report["qprocess"]["stationary"][0], 4.0 / 7.0));
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn exact_handles_the_smallest_chain() {
    let dir = tmp_dir("exact_min");
    let path = dir.join("model.json");
    fs::write(&path, r#"{"states": 2, "Q": [[0,0],[2,-2]]}"#).unwrap();
    let out = fv()
        .args(["exact", "--model"])
        .arg(&path)
        .args(["--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("exact_report.json")).unwrap()).unwrap();
    assert_eq!(report["spine_marginal"][0].as_f64().unwrap(), 1.0);
    assert_eq!(report["qsd"]["lambda_inf"].as_f64().unwrap(), 2.0);
}

#[test]
fn simulate_is_bit_identical_across_reruns() {
    let dir = tmp_dir("simulate_det");
    let model = write_three_state_model(&dir);
    let run = |out_dir: &Path| {
        let out = fv()
            .args(["simulate", "--model"])
            .arg(&model)
            .args([
                "--particles", "2",
                "--horizon", "2000",
                "--replicates", "1",
                "--seed", "7",
                "--init", "delta:1",
                "--out",
            ])
            .arg(out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr_of(&out));
    };
    let d1 = dir.join("a");
    let d2 = dir.join("b");
    run(&d1);
    run(&d2);
    for name in [
        "rep_000/events.csv",
        "rep_000/trajectories.csv",
        "rep_000/meta.json",
        "rep_000/spine.csv",
        "rep_000/branch_times.csv",
        "summary.json",
    ] {
        let a = fs::read(d1.join(name)).unwrap();
        let b = fs::read(d2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(!a.is_empty());
    }
    // Different seed, different events.
    let d3 = dir.join("c");
    let out = fv()
        .args(["simulate", "--model"])
        .arg(&model)
        .args([
            "--particles", "2",
            "--horizon", "2000",
            "--replicates", "1",
            "--seed", "8",
            "--init", "delta:1",
            "--out",
        ])
        .arg(&d3)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_ne!(
        fs::read(d1.join("rep_000/events.csv")).unwrap(),
        fs::read(d3.join("rep_000/events.csv")).unwrap()
    );
}

#[test]
fn simulate_rejects_a_single_particle() {
    let dir = tmp_dir("simulate_n1");
    let model = write_three_state_model(&dir);
    let out = fv()
        .args(["simulate", "--model"])
        .arg(&model)
        .args(["--particles", "1", "--horizon", "10", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("two particles"), "{}", stderr_of(&out));
}

#[test]
fn sidebranch_surfaces_insufficient_counts_on_tiny_samples() {
    let dir = tmp_dir("sidebranch_small");
    let model = write_three_state_model(&dir);
    let out = fv()
        .args(["sidebranch", "--model"])
        .arg(&model)
        .args([
            "--particles", "20",
            "--horizon", "30",
            "--replicates", "10",
            "--seed", "3",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(
        stderr_of(&out).contains("InsufficientExpectedCounts"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn sidebranch_happy_path_writes_a_full_report() {
    let dir = tmp_dir("sidebranch_ok");
    let model = write_three_state_model(&dir);
    let out = fv()
        .args(["sidebranch", "--model"])
        .arg(&model)
        .args([
            "--particles", "40",
            "--horizon", "60",
            "--replicates", "150",
            "--seed", "5",
            "--oracle-trees", "600",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.join("sidebranch_report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["z_trees"].as_u64().unwrap() >= 100);
    assert!(report["oracle_trees"].as_u64().unwrap() >= 500);
    let p = report["size_classes"]["p"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    let observed: Vec<u64> = report["size_classes"]["observed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(observed.iter().sum::<u64>(), report["z_trees"].as_u64().unwrap());
    assert!(report["truncation_fraction"].as_f64().unwrap() < 0.5);
}

#[test]
fn exact_report_on_a_four_state_model_passes_self_checks() {
    let dir = tmp_dir("exact_four");
    let path = dir.join("model.json");
    fs::write(
        &path,
        r#"{"states": 4, "Q": [[0,0,0,0],[1,-4,2,1],[0.5,1.5,-3,1],[2,0.5,0.5,-3]]}"#,
    )
    .unwrap();
    let out = fv()
        .args(["exact", "--model"])
        .arg(&path)
        .args(["--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("exact_report.json")).unwrap()).unwrap();
    let spine: Vec<f64> = report["spine_marginal"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((spine.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let f = report["race_f"].as_array().unwrap();
    for (x, row) in f.iter().enumerate() {
        for (y, v) in row.as_array().unwrap().iter().enumerate() {
            let v = v.as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v), "f({x},{y}) = {v}");
            let sym = f[y].as_array().unwrap()[x].as_f64().unwrap();
            assert!((v + sym - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn sweep_with_one_particle_count_emits_one_row_per_state() {
    let dir = tmp_dir("sweep_single");
    let model = write_three_state_model(&dir);
    let out = fv()
        .args(["sweep", "--model"])
        .arg(&model)
        .args([
            "--particles", "2",
            "--horizon", "60",
            "--replicates", "3",
            "--seed", "11",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(lines[0], "particles,state,occupancy,ci_low,ci_high,tv_to_qprocess_stationary");
    assert_eq!(lines.len(), 1 + 2, "{csv}");
    assert!(lines[1].starts_with("2,1,"));
    assert!(lines[2].starts_with("2,2,"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tmp_dir("config_overlay");
    let model = write_three_state_model(&dir);
    let cfg_path = dir.join("config.json");
    fs::write(
        &cfg_path,
        format!(
            r#"{{"model": {:?}, "particles": [2], "horizon": 50.0, "replicates": 2, "seed": 1, "init": "qsd"}}"#,
            model.to_str().unwrap()
        ),
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = fv()
        .args(["simulate", "--config"])
        .arg(&cfg_path)
        .args(["--replicates", "1", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    // The flag value (1 replicate) wins over the config file (2).
    assert_eq!(manifest["replicates"].as_array().unwrap().len(), 1);
    assert_eq!(manifest["config"]["seed"].as_u64().unwrap(), 1);
    assert_eq!(manifest["incomplete"].as_u64().unwrap(), 0);
}
