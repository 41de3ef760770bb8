use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ampbench::figures::{read_fig1a_csv, read_fig1b_csv};
use serde_json::Value;

fn ampbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ampbench"))
        .args(args)
        .env("AMPBENCH_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn figure_1b_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1b.csv");
    let status = ampbench(&["figure", "1b", "--lambda", "0.4", "--eta-min", "0", "--eta-max", "2.8", "--eta-steps", "29", "--out", path_str(&out)]);
    assert!(status.status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("eta,bound_normal,bound_conj,gaussian_min,aup_normal,aup_conj\n"));
    let rows = read_fig1b_csv(text.as_bytes()).unwrap();
    let kink = rows.iter().find(|r| (r.eta - 1.4).abs() < 1e-12).unwrap();
    assert_eq!(kink.bound_normal, 0.5);
    assert!((kink.gaussian_min - 0.583920).abs() < 1e-6);
    assert!(rows[0].eta == 0.0 && rows[0].aup_conj == 0.5);
}

#[test]
fn figure_1a_csv_and_json() {
    let csv = ampbench(&["figure", "1a", "--eta", "1.3", "--lambda", "0.4", "--r-steps", "21"]);
    assert!(csv.status.success());
    let rows = read_fig1a_csv(csv.stdout.as_slice()).unwrap();
    let origin = rows.iter().find(|r| r.curve == "boundary_normal" && r.r == 0.0).unwrap();
    assert!((origin.vbar_x - 0.8).abs() < 1e-12 && (origin.vbar_p - 0.8).abs() < 1e-12);

    let json = json_of(&ampbench(&["figure", "1a", "--r-steps", "21", "--format", "json"]));
    assert_eq!(json.as_array().unwrap().len(), rows.len());
}

#[test]
fn bounds_table_examples() {
    let t = json_of(&ampbench(&["bounds", "--lambda", "0.4", "--eta", "1.7"]));
    assert!((t["gaussian_min"].as_f64().unwrap() - 0.730797).abs() < 1e-6);
    assert!((t["nla_asymptote"].as_f64().unwrap() - 0.714286).abs() < 1e-6);
    let t = json_of(&ampbench(&["bounds", "--lambda", "0.4", "--eta", "1.4"]));
    assert_eq!(t["theorem1_rhs"]["normal"].as_f64().unwrap(), 0.0);
    assert_eq!(t["selected"]["task"], "normal");
    let t = json_of(&ampbench(&["bounds", "--lambda", "0.4", "--eta", "2.5", "--conjugate"]));
    assert!((t["symmetric_msd_bound"]["normal"].as_f64().unwrap() - 1.285714).abs() < 1e-6);
    assert_eq!(t["selected"]["task"], "conj");
    for key in ["fidelity_bound", "aup_rhs", "theorem2_rhs", "eb_line"] {
        assert!(!t[key].is_null(), "{key}");
    }
}

#[test]
fn bounds_reject_out_of_domain() {
    let out = ampbench(&["bounds", "--lambda", "-1", "--eta", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nla_sweep_output() {
    let out = ampbench(&["nla-sweep", "--g", "1.1,1.2", "--N", "3,6", "--lambda", "0.4", "--eta-min", "1.0", "--eta-max", "1.6", "--eta-steps", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("g,N,lambda,eta,p_s,vbar,vbar_prob,asymptote,gaussian_min\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 4);

    let missing = ampbench(&["nla-sweep", "--g", "1.1", "--N", "3"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn verify_nla_and_backends_pass() {
    for suite in ["nla", "backends"] {
        let report = json_of(&ampbench(&["verify", "--suite", suite, "--seed", "1"]));
        assert_eq!(report["passed"], true, "{suite}");
        let checks = report["suites"][0]["checks"].as_array().unwrap();
        assert!(checks.iter().all(|c| c["margin"].as_f64().unwrap() >= 0.0));
    }
}

#[test]
fn verify_rejects_unknown_suite() {
    let out = ampbench(&["verify", "--suite", "everything"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn certify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("nla.csv");
    let cert = dir.path().join("cert.json");
    let sim = ampbench(&["simulate", "--channel", "nla", "--g", "1.2", "--N", "4", "--lambda", "3", "--shots", "100000", "--seed", "2", "--out", path_str(&samples)]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let out = ampbench(&["certify", "--input", path_str(&samples), "--lambda", "3", "--out", path_str(&cert)]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(&cert).unwrap()).unwrap();
    assert_eq!(v["verdicts"]["beats_gaussian"], true);
    assert_eq!(v["significance"]["beats_gaussian"], true);
    assert_eq!(v["shots"], 100000);
    for key in ["p_s", "vbar_x_prob", "vbar_p_prob", "delta_raw", "delta", "thresholds", "standard_errors"] {
        assert!(!v[key].is_null(), "{key}");
    }
}

#[test]
fn certify_empty_and_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = ampbench(&["certify", "--input", path_str(&empty), "--lambda", "0.4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient data"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "shot_id,alpha_re,alpha_im,quad,value,herald\n0,0.1,0.2,x,0.5,1\n1,0.1,oops,p,0.5,1\n").unwrap();
    let out = ampbench(&["certify", "--input", path_str(&bad), "--lambda", "0.4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn evaluate_reports_margins() {
    let v = json_of(&ampbench(&["evaluate", "--channel", "amp", "--g", "1.4", "--lambda", "0.4", "--grid-order", "12"]));
    assert_eq!(v["theorem1"]["satisfied"], true);
    assert!(v["certificate"].is_object());
    let spec = r#"{"kind":"random","kraus":2,"trace_decreasing":true,"seed":4}"#;
    let v = json_of(&ampbench(&["evaluate", "--channel", spec, "--dim", "10", "--eta", "2.0", "--conjugate", "--mc-samples", "20000"]));
    assert!(v["certificate"].is_null());
    assert!(v["summary"]["fidelity"].as_f64().unwrap() <= v["summary"]["p_s"].as_f64().unwrap() + 1e-9);
}

#[test]
fn identical_runs_are_byte_identical() {
    let args = ["simulate", "--channel", "random", "--lambda", "0.5", "--shots", "500", "--seed", "9"];
    assert_eq!(ampbench(&args).stdout, ampbench(&args).stdout);
    let args = ["figure", "1b", "--eta-steps", "31"];
    assert_eq!(ampbench(&args).stdout, ampbench(&args).stdout);
}
