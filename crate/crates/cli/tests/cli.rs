use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn slicectl(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slicectl"))
        .args(args)
        .arg("--out-dir")
        .arg(out_dir)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_error(out: &Output) -> Value {
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"].clone()
}

#[test]
fn bad_config_is_a_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "slices = 3\n").unwrap();
    let out = slicectl(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_error(&out);
    assert_eq!(err["kind"], "toml");
    assert!(err["message"].as_str().unwrap().contains("bad.toml"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = slicectl(&["simulate", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["kind"], "usage");
}

#[test]
fn interval_must_divide_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let out = slicectl(&["simulate", "--epochs", "300", "--record-interval", "200"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_error(&out)["kind"].is_string());
}

#[test]
fn zero_epochs_writes_header_only_metrics() {
    let dir = tempfile::tempdir().unwrap();
    stdout_json(&slicectl(&["simulate", "--seeds", "1", "--epochs", "0"], dir.path()));
    let text = std::fs::read_to_string(dir.path().join("greedy-seed1.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("config_hash,method,seed,window"));
}

#[test]
fn simulate_then_aggregate_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let summary = stdout_json(&slicectl(
        &["simulate", "--policy", "prio", "--seeds", "1,2,3", "--epochs", "400", "--record-interval", "100"],
        d,
    ));
    assert_eq!(summary["summary"]["runs"].as_array().unwrap().len(), 3);

    let files: Vec<String> = (1..=3).map(|s| d.join(format!("prio-seed{s}.csv")).display().to_string()).collect();
    let mut args = vec!["aggregate", "--window", "200"];
    args.extend(files.iter().map(String::as_str));
    let agg = stdout_json(&slicectl(&args, d));
    assert_eq!(agg["windows"], 2);
    let mut rdr = csv::Reader::from_path(d.join("aggregate.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let f = |name: &str| rec[col(name)].parse::<f64>().unwrap();
        assert!(f("util_mean_lo") <= f("util_mean_mean") + 1e-12);
        assert!(f("util_mean_mean") <= f("util_mean_hi") + 1e-12);
    }

    // A window that is not a multiple of the record interval is rejected.
    let mut args = vec!["aggregate", "--window", "150"];
    args.extend(files.iter().map(String::as_str));
    assert_eq!(stderr_error(&slicectl(&args, d))["kind"], "alignment");

    let log = |s: u32| d.join(format!("prio-seed{s}-log.csv")).display().to_string();
    let (l1, l2) = (log(1), log(2));
    let cmp = stdout_json(&slicectl(&["compare", "--a", &l1, "--b", &l2, "--horizon", "400"], d));
    assert!(cmp.is_object());
    assert!(d.join("compare.json").exists());
    let too_long = slicectl(&["compare", "--a", &l1, "--b", &l2, "--horizon", "100000"], d);
    assert_eq!(stderr_error(&too_long)["kind"], "range");
}

#[test]
fn oracle_verify_reports_small_transform_error() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&slicectl(&["oracle-verify", "--policies", "3", "--renewal-events", "20000"], dir.path()));
    assert!(v["max_transform_error"].as_f64().unwrap() < 1e-9);
    assert!(dir.path().join("oracle-report.json").exists());
}

#[test]
fn eval_baselines_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&slicectl(
        &["eval", "--policy", "greedy", "random", "--seeds", "1,2", "--epochs", "50"],
        dir.path(),
    ));
    assert_eq!(v["reports"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("eval.json").exists());
    let missing = slicectl(&["eval", "--policy", "no-such-policy", "--epochs", "5"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn collect_then_train_replica() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = stdout_json(&slicectl(&["collect", "--policy", "greedy", "--samples", "300", "--seed", "5"], d));
    let dataset = c["dataset"].as_str().unwrap().to_string();
    let t = stdout_json(&slicectl(&["train-dt", "--dataset", &dataset, "--epochs", "3"], d));
    let acc = t["test_accuracy"]["exact"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(d.join("dt-greedy.json").exists());
    assert!(d.join("dt-greedy-history.csv").exists());
}
