//! Exit-code and artifact behavior of the binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fbmp"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn run_cap_corner_exits_zero_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run"])
        .arg(scenario("cap_corner.json"))
        .args(["--out"])
        .arg(tmp.path())
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["name"], "cap_corner");
    assert_eq!(report["schema_version"], 1);
    let lemma33 = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "lemma33")
        .unwrap();
    assert_eq!(lemma33["verdict"], "pass");
}

#[test]
fn run_flat_halfspace_exits_one_and_names_the_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run"])
        .arg(scenario("flat_halfspace.json"))
        .args(["--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap())
            .unwrap();
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["verdict"] == "fail")
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["strong_m_convexity"]);
}

#[test]
fn malformed_scenario_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    let text = std::fs::read_to_string(scenario("flat_halfspace.json")).unwrap();
    std::fs::write(&bad, text.replace("\"0\"", "\"x1 +\"")).unwrap();
    let out = bin().args(["run"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("offset"), "stderr: {stderr}");
    // missing file is also a configuration error
    let out = bin()
        .args(["run"])
        .arg(Path::new("nope.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_csv_with_header() {
    let tmp = tempfile::tempdir().unwrap();
    let csv_path = tmp.path().join("eps.csv");
    let status = bin()
        .args(["sweep"])
        .arg(scenario("cap_corner.json"))
        .args(["--param", "epsilon", "--values", "0.2,0.1"])
        .args(["--out"])
        .arg(&csv_path)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("epsilon,k,theta_star,f_star,worst_trace,delta_v,verdict\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn sweep_rejects_bad_parameters() {
    let out = bin()
        .args(["sweep"])
        .arg(scenario("cap_corner.json"))
        .args(["--param", "bogus", "--values", "0.1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // clap maps missing required arguments to exit code 2 as well
    let out = bin()
        .args(["sweep"])
        .arg(scenario("cap_corner.json"))
        .args(["--param", "epsilon"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let strip_timing = |v: &mut serde_json::Value| {
        v["timing_ms"] = serde_json::json!(0);
    };
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let tmp = tempfile::tempdir().unwrap();
        let status = bin()
            .args(["run"])
            .arg(scenario("conformal_cap.json"))
            .args(["--threads", threads, "--out"])
            .arg(tmp.path())
            .status()
            .unwrap();
        assert!(status.success());
        let mut report: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(tmp.path().join("report.json")).unwrap(),
        )
        .unwrap();
        strip_timing(&mut report);
        reports.push(serde_json::to_string(&report).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}
