use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdlab")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 8] = [
    "--set",
    "n_eval_samples=4",
    "--set",
    "attacks=[{\"family\":\"simba\",\"budget\":600}]",
    "--set",
    "seed=3",
    "--jobs",
    "1",
];

#[test]
fn theory_writes_both_curves_and_records_nu() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let run = bdlab(&["theory", "--n", "1000", "--clean-acc", "0.90", "--out", path(&out)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));

    let a = std::fs::read_to_string(out.join("fig2a.csv")).unwrap();
    assert!(a.starts_with("s,p_acc\n"));
    assert_eq!(a.lines().count(), 1 + 201);
    let b = std::fs::read_to_string(out.join("fig2b.csv")).unwrap();
    assert!(b.starts_with("theta,sigma,acc\n"));
    assert_eq!(b.lines().count(), 1 + 21 * 7);

    let m = manifest(&out);
    let nu = m["theory"]["nu"].as_f64().unwrap();
    assert!((0.40..=0.42).contains(&nu), "{nu}");
    assert_eq!(m["command"], "theory");
    assert!(m["config"].is_object());
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);

    let again = bdlab(&["theory", "--n", "1000", "--clean-acc", "0.90", "--out", path(&out)]);
    assert_eq!(code(&again), 0);
    assert_eq!(std::fs::read_to_string(out.join("fig2a.csv")).unwrap(), a);
    assert_eq!(std::fs::read_to_string(out.join("fig2b.csv")).unwrap(), b);
}

#[test]
fn unreachable_clean_accuracy_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = bdlab(&["theory", "--clean-acc", "1.5", "--out", path(dir.path())]);
    assert_eq!(code(&run), 2);
    assert!(manifest(dir.path())["error"].is_string());
}

#[test]
fn missing_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let run = bdlab(&["sweep", "--config", path(&missing), "--out", path(dir.path())]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("error"));
}

#[test]
fn unknown_override_key_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let run = bdlab(&["attack", "--set", "defense.thetta=0.5", "--out", path(dir.path())]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("defense.thetta"), "{}", stderr(&run));
    assert!(manifest(dir.path())["error"]
        .as_str()
        .unwrap()
        .contains("defense.thetta"));
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(code(&bdlab(&["sweep", "--jobs", "many"])), 2);
    assert_eq!(code(&bdlab(&["frobnicate"])), 2);
}

#[test]
fn help_lists_every_config_key_with_default() {
    for sub in ["make-data", "train", "eval-acc", "theory", "attack", "sweep"] {
        let run = bdlab(&[sub, "--help"]);
        assert_eq!(code(&run), 0);
        let text = String::from_utf8(run.stdout).unwrap();
        for k in bdlab::harness::config::config_keys() {
            let line = text
                .lines()
                .find(|l| l.split_whitespace().next() == Some(k.key))
                .unwrap_or_else(|| panic!("{sub}: {} missing", k.key));
            assert!(line.contains("default"), "{line}");
        }
    }
}

#[test]
fn sweep_over_the_disabled_point_matches_attack_without_defense() {
    let dir = tempfile::tempdir().unwrap();
    let (a, s) = (dir.path().join("attack"), dir.path().join("sweep"));
    let mut args = vec![
        "attack",
        "--set",
        "defense={\"theta\":0.0,\"sigma\":0.0}",
        "--out",
        path(&a),
    ];
    args.extend(SMALL);
    let run = bdlab(&args);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let mut args = vec![
        "sweep",
        "--set",
        "grid=[{\"theta\":0.0,\"sigma\":0.0}]",
        "--out",
        path(&s),
    ];
    args.extend(SMALL);
    let run = bdlab(&args);
    assert_eq!(code(&run), 0, "{}", stderr(&run));

    let read = |d: &Path| std::fs::read_to_string(d.join("summary.csv")).unwrap();
    assert_eq!(read(&a), read(&s));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 1);
    assert_eq!(manifest(&a)["seeds"]["master"], 3);
}

#[test]
fn attack_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["attack", "--out", path(dir.path())];
    args.extend(SMALL);
    assert_eq!(code(&bdlab(&args)), 0);
    let first = std::fs::read(dir.path().join("summary.csv")).unwrap();
    assert_eq!(code(&bdlab(&args)), 0);
    assert_eq!(std::fs::read(dir.path().join("summary.csv")).unwrap(), first);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["attack", "--out", path(dir.path())];
    args.extend(SMALL);
    args.extend(["--seed", "42"]);
    assert_eq!(code(&bdlab(&args)), 0);
    let m = manifest(dir.path());
    assert_eq!(m["seeds"]["master"], 42);
    assert_eq!(m["config"]["seed"], 42);
}

#[test]
fn failed_calibration_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let run = bdlab(&[
        "sweep",
        "--set",
        "calibrate_thresholds=true",
        "--set",
        "attacks=[{\"family\":\"simba\",\"budget\":2}]",
        "--set",
        "n_eval_samples=4",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&run), 1, "{}", stderr(&run));
    assert!(stderr(&run).contains("calibration failed"));
    assert!(manifest(dir.path())["error"].is_string());
}

#[test]
fn data_train_and_accuracy_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    let model = d.join("model");
    let acc = d.join("acc");
    assert_eq!(code(&bdlab(&["make-data", "--out", path(&data)])), 0);
    let train = data.join("train.csv");
    let test = data.join("test.csv");
    assert!(std::fs::read_to_string(&train)
        .unwrap()
        .starts_with("label,dim=20,classes=10\n"));

    let train_set = format!("dataset.train_csv=\"{}\"", path(&train));
    let test_set = format!("dataset.test_csv=\"{}\"", path(&test));
    let run = bdlab(&["train", "--set", &train_set, "--set", &test_set, "--out", path(&model)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let clean = manifest(&model)["clean_acc"].as_f64().unwrap();
    assert!(clean >= 0.9, "{clean}");

    let clf = format!("classifier.path=\"{}\"", path(&model.join("classifier.json")));
    let run = bdlab(&[
        "eval-acc",
        "--set",
        &train_set,
        "--set",
        &test_set,
        "--set",
        &clf,
        "--out",
        path(&acc),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let csv = std::fs::read_to_string(acc.join("accuracy.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    // defense (0.5, 0.1), then the grid: (0, 0), (0.5, 0.1), (0.7, 0.1)
    assert_eq!(rows[1], vec![0.0, 0.0, clean]);
    assert!(rows.iter().all(|r| clean - r[2] <= 0.02));
}
