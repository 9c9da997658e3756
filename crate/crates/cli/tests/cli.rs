use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crc_core::fixtures::{TUNISIA_CELLS, TUNISIA_N_TOT};
use crc_core::model::write_records_csv;
use crc_core::rng::substream;
use crc_core::sim::{generate_population, OutcomeKind, ScenarioConfig};
use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crc-causal"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

fn tunisia_file(dir: &Path) -> PathBuf {
    let path = dir.join("tunisia.json");
    let body = serde_json::json!({ "n_tot": TUNISIA_N_TOT, "cells": TUNISIA_CELLS });
    fs::write(&path, body.to_string()).unwrap();
    path
}

fn find<'a>(reports: &'a [Value], method: &str, arm: &str, kind: &str) -> &'a Value {
    reports
        .iter()
        .find(|r| r["method"] == method && r["arm"] == arm && r["interval"]["kind"] == kind)
        .unwrap_or_else(|| panic!("no {method} {arm} {kind} report"))
}

#[test]
fn rs_arm_a_matches_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    tunisia_file(dir.path());
    let out = run(dir.path(), &["estimate", "--cells", "tunisia.json", "--method", "rs", "--arm", "A"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    let r = &reports[0];
    assert!((r["point"].as_f64().unwrap() - 85.0 / 86.0).abs() < 1e-12);
    assert!((r["se"].as_f64().unwrap() - 0.0116).abs() < 5e-5);
    assert_eq!(r["interval"]["upper"].as_f64().unwrap(), 1.0);
}

#[test]
fn crc_credible_interval_for_arm_b() {
    let dir = tempfile::tempdir().unwrap();
    tunisia_file(dir.path());
    let out = run(
        dir.path(),
        &[
            "estimate", "--cells", "tunisia.json", "--method", "crc", "--arm", "b",
            "--bayes-draws", "2000", "--seed", "7", "--draws-out", "draws.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let reports = v["reports"].as_array().unwrap();
    let wald = find(reports, "CRC", "B", "wald");
    assert!((wald["point"].as_f64().unwrap() - 0.885).abs() < 1e-3);
    let cri = &find(reports, "CRC", "B", "credible")["interval"];
    assert!((cri["lower"].as_f64().unwrap() - 0.82).abs() < 0.01);
    assert!((cri["upper"].as_f64().unwrap() - 0.93).abs() < 0.01);

    let draws = fs::read_to_string(dir.path().join("draws.csv")).unwrap();
    assert!(draws.starts_with("estimator,draw_index,mu_a,mu_b,ate\n"));
    assert_eq!(draws.lines().filter(|l| l.starts_with("CRC,")).count(), 2000);
}

#[test]
fn posterior_output_depends_only_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    tunisia_file(dir.path());
    let args = [
        "estimate", "--cells", "tunisia.json", "--method", "crc,psi-hat",
        "--bayes-draws", "300", "--seed", "11", "--format", "csv",
    ];
    let a = run(dir.path(), &args);
    let b = run(dir.path(), &args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let other = run(dir.path(), &["estimate", "--cells", "tunisia.json", "--method", "crc",
        "--bayes-draws", "300", "--seed", "12", "--format", "csv"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn conservation_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        serde_json::json!({ "n_tot": TUNISIA_N_TOT + 1, "cells": TUNISIA_CELLS }).to_string(),
    )
    .unwrap();
    let out = run(dir.path(), &["estimate", "--cells", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err = stderr_error(&out);
    assert_eq!(err["error"]["code"], "inconsistent-counts");
    assert_eq!(err["error"]["exit"], 2);
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("short.json"), r#"{"n_tot": 3, "cells": [1, 2]}"#).unwrap();
    let out = run(dir.path(), &["estimate", "--cells", "short.json"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(dir.path(), &["estimate", "--cells", "missing.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["error"]["code"], "io");

    tunisia_file(dir.path());
    let out = run(dir.path(), &["estimate", "--cells", "tunisia.json", "--bayes-draws", "10"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(dir.path(), &["estimate", "--cells", "tunisia.json", "--level", "1.5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(dir.path(), &["example", "nowhere", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["error"]["code"], "unknown-fixture");
}

#[test]
fn empty_stream1_cell_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cells = [0u64; 17];
    cells[2] = 5;
    cells[8] = 5;
    fs::write(
        dir.path().join("deg.json"),
        serde_json::json!({ "n_tot": 10, "cells": cells }).to_string(),
    )
    .unwrap();
    let out = run(dir.path(), &["estimate", "--cells", "deg.json", "--method", "crc"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_error(&out)["error"]["exit"], 3);
}

#[test]
fn simulate_is_byte_reproducible_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scn.json"), r#"{"n_tot": 500, "p2": 0.2}"#).unwrap();
    let base = ["simulate", "--scenario", "scn.json", "--reps", "20", "--seed", "5", "--bayes-draws", "50"];
    let mut one: Vec<&str> = base.to_vec();
    one.extend(["--threads", "1", "--out", "one.csv"]);
    let mut four: Vec<&str> = base.to_vec();
    four.extend(["--threads", "4", "--out", "four.csv"]);
    assert!(run(dir.path(), &one).status.success());
    assert!(run(dir.path(), &four).status.success());

    let a = fs::read(dir.path().join("one.csv")).unwrap();
    let b = fs::read(dir.path().join("four.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with(
        "method,target,mean,sd,avg_se,avg_width,coverage_pct,coverage_kind,n_failed,n_reps\n"
    ));
    assert!(text.lines().any(|l| l.starts_with("CRC,A,") && l.contains(",credible,")));

    let m: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("one.csv.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config_digest"].as_str().unwrap().len(), 64);
    assert!(m["timestamp"].as_str().unwrap().ends_with('Z'));
    assert!(m["arguments"].as_array().unwrap().iter().any(|a| a == "--reps"));
    let m4: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("four.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["config_digest"], m4["config_digest"]);
}

#[test]
fn simulate_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--reps", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn continuous_records_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig {
        outcome: OutcomeKind::Continuous,
        n_tot: 2000,
        p2: 0.2,
        ..ScenarioConfig::default()
    };
    let records = generate_population(&cfg, &mut substream(3, 0)).unwrap();
    let file = fs::File::create(dir.path().join("pop.csv")).unwrap();
    write_records_csv(&records, file).unwrap();

    let out = run(
        dir.path(),
        &[
            "estimate", "--records", "pop.csv", "--outcome", "continuous",
            "--method", "standardized", "--bootstrap", "200", "--seed", "9",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    let a = find(reports, "Standardized", "A", "percentile");
    // true mean for arm A in the default scenario is 5.02
    assert!((a["point"].as_f64().unwrap() - 5.02).abs() < 1.5);
    let iv = &a["interval"];
    assert!(iv["lower"].as_f64().unwrap() < iv["upper"].as_f64().unwrap());

    let out = run(dir.path(), &["validate", "--records", "pop.csv"]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["valid"], true);
}

#[test]
fn example_lists_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["example", "tunisia", "--seed", "7", "--bayes-draws", "200"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["n_tot"], 2000);
    let reports = v["reports"].as_array().unwrap();
    for m in ["Stream1Naive", "RS", "Chapman", "PsiHat", "CRC"] {
        assert!(reports.iter().any(|r| r["method"] == m), "missing {m}");
    }
    assert!(!v["footnotes"].as_array().unwrap().is_empty());

    let table = run(dir.path(), &["example", "tunisia", "--seed", "7", "--bayes-draws", "200", "--format", "table"]);
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.contains("RS") && text.contains("98.8%"));
}
