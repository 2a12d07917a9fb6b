use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn drgrad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drgrad")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// One epoch unless `extra` sets its own.
fn write_config(dir: &Path, extra: &str) -> String {
    let extra = if extra.contains("epochs") { extra.to_string() } else { format!(r#", "epochs": 1{extra}"#) };
    let path = dir.join("cfg.json");
    let text = format!(
        r#"{{"dataset": {{"synthetic": {{"n_total": 1500, "n_train": 1280, "cos_theta": -0.6}}}},
            "out": {:?}{extra}}}"#,
        dir.join("runs")
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert_eq!(code(&drgrad(&["train", "--config", &cfg, "--cos-theta", "0"])), 2);
    assert_eq!(code(&drgrad(&["train", "--config", &cfg, "--mode", "nope"])), 2);
    assert_eq!(code(&drgrad(&["train", "--config", &cfg, "--mode", "drgrad"])), 2);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(code(&drgrad(&["train", "--config", bad.to_str().unwrap()])), 2);
}

#[test]
fn gen_data_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = drgrad(&["gen-data", "--config", &cfg, "--out", out.to_str().unwrap(), "--cos-theta", "-0.6"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["train.csv", "test.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    drgrad(&["gen-data", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "7"]);
    assert_ne!(fs::read(a.join("train.csv")).unwrap(), fs::read(c.join("train.csv")).unwrap());
}

#[test]
fn train_eval_summary_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#", "epochs": 4"#);
    let o = drgrad(&["train", "--config", &cfg, "--mode", "drgrad_no_ppnet", "--gamma", "2", "--rho", "0.9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("drgrad_no_ppnet"), "{table}");

    let run = dir.path().join("runs").join("seed-0");
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["model"]["gamma"], 2.0);
    assert_eq!(saved["model"]["rho"], 0.9);

    let run = run.to_str().unwrap();
    let e1 = drgrad(&["eval", run]);
    let e2 = drgrad(&["eval", run, "--split", "test"]);
    assert!(e1.status.success());
    assert_eq!(e1.stdout, e2.stdout);
    let report: serde_json::Value = serde_json::from_slice(&e1.stdout).unwrap();
    assert_eq!(report["split"], "test");

    let s = drgrad(&["telemetry-summary", run]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&s.stdout).unwrap();
    assert_eq!(summary["steps"], 20);
}

#[test]
fn missing_checkpoint_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&drgrad(&["eval", dir.path().to_str().unwrap()])), 1);
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#", "model": {"optimizer": "sgd", "learning_rate": 1e300}"#);
    let o = drgrad(&["train", "--config", &cfg]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("runs").join("seed-0").join("failure.json").is_file());
}
