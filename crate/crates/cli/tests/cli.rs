use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pfm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_then_solve_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfm(dir.path(), &["gen", "linear", "--dimension", "3", "--count", "20", "--x0-distance", "2", "--out", "p.json"]);
    assert!(o.status.success(), "{o:?}");
    let o = pfm(dir.path(), &["solve", "p.json", "--batch-size", "3", "--residual-target", "0.05", "--out-dir", "out"]);
    assert!(o.status.success(), "{o:?}");
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(trace.starts_with("k,residual,moved,stop_reason\n"));
    assert!(trace.trim_end().ends_with("residual_target"));
}

#[test]
fn confident_pairs_round_trip_through_audit() {
    let dir = tempfile::tempdir().unwrap();
    pfm(dir.path(), &["gen", "linear", "--dimension", "2", "--count", "30", "--spread", "0.5", "--x0-distance", "2", "--out", "p.json"]);
    let o = pfm(
        dir.path(),
        &["solve", "p.json", "--solver", "confident", "--gamma", "0.2", "--alpha", "0.1", "--max-iters", "50", "--format", "json", "--out-dir", "."],
    );
    assert!(o.status.success(), "{o:?}");
    let o = pfm(dir.path(), &["audit", "p.json", "pairs.json", "--gamma", "0.2"]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{o:?}");
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["exact"], true);
    assert_eq!(report["pairs_checked"], 50);
}

#[test]
fn bounds_table_spot_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfm(dir.path(), &["bounds", "--lipschitz", "1", "--dist", "10", "--eps", "1", "--gamma", "0.1", "--batch-size", "10"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert!((row[2].parse::<f64>().unwrap() - 0.651322).abs() < 1e-6);
    assert_eq!(row[3], "100");
    assert_eq!(row[6], "101");
}

#[test]
fn experiment_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = r#"{"problem": {"kind": "interval", "lo": -1.0, "hi": 1.0, "x0": 5.0},
        "solver": {"kind": "pfm", "config": {"batch_size": 1, "stop": {"max_iters": 10000, "residual_target": 0.1}}},
        "replications": 2, "seed": 3, "output": {"dir": "out", "prefix": "run"}}"#;
    fs::write(dir.path().join("good.json"), good).unwrap();
    let o = pfm(dir.path(), &["experiment", "good.json", "--workers", "2", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let csv = fs::read_to_string(dir.path().join("out/run.csv")).unwrap();
    assert_eq!(csv, stdout(&o));
    assert!(dir.path().join("out/run.json").exists());

    // Growth bound requested on a problem without growth metadata.
    let bad = good.replace("\"seed\": 3", "\"seed\": 3, \"targets\": [{\"eps\": 0.1, \"gamma\": 0.1, \"use_growth\": true}]")
        .replace("\"kind\": \"interval\", \"lo\": -1.0, \"hi\": 1.0, \"x0\": 5.0",
                 "\"kind\": \"linear\", \"params\": {\"dimension\": 2, \"count\": 4, \"x0_distance\": 2.0}");
    fs::write(dir.path().join("bad.json"), bad).unwrap();
    assert_eq!(pfm(dir.path(), &["experiment", "bad.json"]).status.code(), Some(1));

    fs::write(dir.path().join("invalid.json"), good.replace("\"replications\": 2", "\"replications\": 0")).unwrap();
    let o = pfm(dir.path(), &["experiment", "invalid.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("replications"));
}

#[test]
fn failed_validation_flag_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // Only one of the two interval constraints is ever violated, so a batch
    // of 10 can save at most a factor of about 2, far from the ideal 10.
    let spec = r#"{"problem": {"kind": "interval", "lo": -1.0, "hi": 1.0, "x0": 5.0},
        "solver": {"kind": "pfm", "config": {"batch_size": 1, "stop": {"max_iters": 100000}}},
        "replications": 40, "seed": 9,
        "batch_sizes": [1, 10],
        "targets": [{"eps": 0.01, "gamma": 0.1}]}"#;
    fs::write(dir.path().join("s.json"), spec).unwrap();
    let o = pfm(dir.path(), &["experiment", "s.json"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL batch_scaling"));
}
