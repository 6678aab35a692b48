use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loop-morse"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn pendulum_homology_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["homology"], &config("pendulum.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(dir.path());
    assert_eq!(r["complex"][0]["betti"], serde_json::json!([1, 1]));
    let rows = r["generators"].as_array().unwrap().len();
    let csv = fs::read_to_string(dir.path().join("generators.csv")).unwrap();
    assert_eq!(csv.lines().count(), rows + 1);
    let d1 = fs::read_to_string(dir.path().join("boundary/loop_0_d1.txt")).unwrap();
    assert_eq!(d1, "0\n");
}

#[test]
fn orbits_stage_stops_before_indices() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["orbits"], &config("pendulum.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path());
    assert!(r["generators"].as_array().unwrap().iter().all(|g| g["maslov"].is_null()));
    assert!(r["complex"].as_array().unwrap().is_empty());
}

#[test]
fn degenerate_pendulum_is_quarantined() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["orbits"], &config("degenerate_pendulum.json"), dir.path());
    assert_eq!(o.status.code(), Some(3));
    let r = report(dir.path());
    assert!(!r["quarantined"].as_array().unwrap().is_empty());
    assert_eq!(r["passed"], Value::Bool(false));
}

#[test]
fn config_errors_exit_2_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"system\": \"pendulum-omega-pi\",\n  \"resolution\": { \"n_t\": 2 }\n}\n").unwrap();
    let o = run(&["orbits"], &bad, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    let o = run(&["orbits"], &dir.path().join("missing.json"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    // a system stage without a system
    let empty = dir.path().join("empty.json");
    fs::write(&empty, "{}").unwrap();
    assert_eq!(run(&["orbits"], &empty, &dir.path().join("out")).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_4_with_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pole.json");
    // the chart has no coordinates at the pole
    fs::write(
        &cfg,
        r#"{
  "system": "round-sphere-bvp",
  "boundary": { "kind": "fixed", "q0": [0.0, 0.0], "targets": [[1.0, 0.5]] }
}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&["orbits"], &cfg, &out);
    assert_eq!(o.status.code(), Some(4));
    let e: Value = serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(e["kind"], "domain");
    assert_eq!(e["stage"], "orbits");
}

#[test]
fn reports_do_not_depend_on_the_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = config("pendulum.json");
    assert_eq!(run(&["complex", "--threads", "1", "--seed", "9"], &cfg, &a).status.code(), Some(0));
    assert_eq!(run(&["complex", "--threads", "3", "--seed", "9"], &cfg, &b).status.code(), Some(0));
    for f in ["report.json", "generators.csv", "boundary/loop_0_d0.txt", "boundary/loop_0_d1.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(report(&a)["config"]["seeds"]["seed"], 9);
}
