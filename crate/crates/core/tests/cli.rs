use std::path::Path;
use std::process::{Command, Output};

fn stgt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stgt")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = stgt(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_train_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tri.jsonl");
    let config = dir.path().join("config.json");
    let runs = dir.path().join("runs");
    std::fs::write(&config, r#"{"d": 8, "serializer.m": 4, "epochs": 2, "batch_size": 8}"#).unwrap();

    ok(&["synth", "--task", "triangle-count", "--count", "40", "--seed", "3", "--out", p(&data)]);
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 40);

    ok(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&runs), "--seeds", "0,1"]);
    let log = std::fs::read_to_string(runs.join("seed-0/log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["train_loss"].is_f64() && v["val_metric"].is_f64());
    }

    // Evaluating the checkpoint reproduces the recorded test metric.
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(runs.join("seed-1/record.json")).unwrap()).unwrap();
    let line = ok(&[
        "eval", "--checkpoint", p(&runs.join("seed-1/checkpoint")), "--data", p(&data),
        "--split", "test", "--splits", p(&runs.join("splits")),
    ]);
    let metric: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(metric["metric"], "mae");
    assert_eq!(metric["seed"], 1);
    assert_eq!(metric["value"].as_f64(), record["final_test_metric"].as_f64());

    let summary = ok(&["report", "--runs", p(&runs)]);
    assert!(summary.starts_with("mae (test, 2 seeds): "), "{summary}");
    assert!(summary.contains(" ± "));
}

#[test]
fn ablate_overrides_variant() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tri.jsonl");
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"d": 8, "epochs": 1}"#).unwrap();
    ok(&["synth", "--task", "triangle-count", "--count", "20", "--out", p(&data)]);
    let out = dir.path().join("pool");
    ok(&["ablate", "--variant", "sum-pool", "--config", p(&config), "--data", p(&data), "--out", p(&out), "--seeds", "0"]);
    let record = std::fs::read_to_string(out.join("seed-0/record.json")).unwrap();
    assert!(record.contains(r#""variant": "sum-pool""#), "{record}");

    let bad = stgt(&["ablate", "--variant", "no-such", "--config", p(&config), "--data", p(&data), "--out", p(&out)]);
    assert!(!bad.status.success());
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck", "--module", "all"]);
    for module in ["mp", "serializer", "attn", "head", "model"] {
        assert!(out.lines().any(|l| l.starts_with(module) && l.ends_with("PASS")), "{out}");
    }
    assert!(!stgt(&["gradcheck", "--module", "nope"]).status.success());
}

#[test]
fn malformed_inputs_fail_with_field_names() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.jsonl");
    std::fs::write(&data, "{\"nodes\": [[0], [1]], \"edges\": [[0, 1, [0]]], \"target\": 1.0}\n{\"nodes\": [[0]], \"edges\": [[0, 2, [0]]], \"target\": 0.0}\n").unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"epochs": 1}"#).unwrap();
    let out = stgt(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("edges[0]"), "{err}");

    std::fs::write(&config, r#"{"epochs": 1, "serializer.k": 3}"#).unwrap();
    let out = stgt(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&dir.path().join("o"))]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("serializer.k"));
}
