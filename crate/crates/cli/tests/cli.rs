use std::path::Path;
use std::process::{Command, Output};

fn epqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epqp")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn bounds_sweep_writes_one_csv_row_per_epsilon() {
    let out = epqp(&["bounds", "--formula", "rotation-lower", "--E", "1", "--eps", "1e-2,1e-3,1e-4", "--delta", "0.5", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 4, "header plus three rows:\n{text}");
    assert!(text.starts_with("# config: "));
}

#[test]
fn missing_required_parameter_is_a_domain_error() {
    let out = epqp(&["bounds", "--formula", "rotation-lower", "--E", "1", "--eps", "1e-3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta"));
}

#[test]
fn table_rows_are_addressed_by_side_and_index() {
    let out = epqp(&["bounds", "--table", "upper", "--row", "1", "--column", "finite", "--d", "2", "--eps", "0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 1);
}

fn replay_matches(dir: &Path, format: &str, args: &[&str]) {
    let first = dir.join(format!("first.{format}"));
    let second = dir.join(format!("second.{format}"));
    let mut full = vec!["--seed", "7", "--restarts", "2", "--max-iter", "60", "--format", format, "--out", first.to_str().unwrap()];
    full.extend_from_slice(args);
    let out = epqp(&full);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = epqp(&["replay", first.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    replay_matches(dir.path(), "json", &["--D", "6", "diamond", "--ch1", "rot:0.3", "--ch2", "id", "--E", "1"]);
    replay_matches(dir.path(), "csv", &["--D", "6", "net", "--kind", "gc", "--res", "0.2,0.4,0.2", "--beta", "1", "--samples", "5", "--measured", "1"]);
}

#[test]
fn diamond_between_rotations_respects_analytic_bound() {
    let out = epqp(&["--D", "8", "--restarts", "3", "--max-iter", "150", "diamond", "--ch1", "rot:0.2", "--ch2", "id", "--E", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["pass"], serde_json::json!(true));
    let lower = report["rows"][0][3].as_f64().unwrap();
    assert!(lower > 0.0 && lower <= 2.0);
}

#[test]
fn unknown_channel_and_bad_cutoff_are_rejected() {
    let out = epqp(&["diamond", "--ch1", "warp:1", "--ch2", "id"]);
    assert_eq!(out.status.code(), Some(2));
    let out = epqp(&["--D", "0", "holevo", "--experiment", "thermal", "--E", "1"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn emitted_net_is_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    let out = epqp(&["net", "--kind", "gc", "--res", "0.5,1,0.5", "--samples", "3", "--emit-net", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let net: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(net["kind"], serde_json::json!("gauge-covariant"));
    assert!(!net["points"].as_array().unwrap().is_empty());
}
