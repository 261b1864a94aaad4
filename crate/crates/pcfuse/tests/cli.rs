//! End-to-end runs of the `pcfuse` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pcfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcfuse")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pcfuse(args);
    assert!(out.status.success(), "pcfuse {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn make(dir: &Path, scene: &str, extra: &[&str]) -> String {
    let d = dir.to_str().unwrap();
    let mut args = vec!["make-synthetic", "--scene", scene, "--out", d, "--frames", "6", "--width", "24", "--height", "24"];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("manifest.json").to_str().unwrap().to_string()
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_depth_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = make(&tmp.path().join("data"), "dynamic", &["--noise", "0.02", "--seed", "3"]);
    let out = tmp.path().join("out");
    ok(&["run", &manifest, "--out", out.to_str().unwrap(), "--report", "json,csv", "--eval-input", "--ply"]);
    for t in 0..6 {
        assert!(out.join(format!("depth/{t:06}.pfm")).is_file());
    }
    for f in ["report.json", "report.csv", "report_input.csv", "cloud.ply"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let doc = report(&out);
    assert_eq!(doc["output"]["frames"], 6);
    assert!(doc["output"]["opw"].as_f64().unwrap() >= 0.0);
    assert!(doc["input"]["rae"].as_f64().is_some());
    assert_eq!(doc["settings"]["mask"], "residual");
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 + 1);
}

#[test]
fn evaluating_ground_truth_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let manifest = make(&data, "dynamic", &[]);
    let out = tmp.path().join("eval");
    ok(&["eval", &manifest, "--depth-dir", data.join("gt").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let r = &report(&out)["output"];
    assert_eq!(r["rae"].as_f64().unwrap(), 0.0);
    assert_eq!(r["delta_bad"][0].as_f64().unwrap(), 0.0);
    assert_eq!(r["tcc"].as_f64().unwrap(), 1.0);
}

#[test]
fn temporal_fusion_improves_consistency_on_noisy_dynamic_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = make(&tmp.path().join("data"), "dynamic", &["--noise", "0.05", "--seed", "11"]);
    let tcc = |ablation: &str| {
        let out = tmp.path().join(ablation);
        ok(&["run", &manifest, "--ablation", ablation, "--out", out.to_str().unwrap()]);
        report(&out)["output"]["tcc"].as_f64().unwrap()
    };
    let full = tcc("full");
    let none = tcc("no-temporal");
    assert!(full >= none, "full {full} < no-temporal {none}");
}

#[test]
fn conflicting_providers_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = make(&tmp.path().join("data"), "static", &[]);
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    for extra in [
        &["--uncertainty-kind", "confidence"][..],
        &["--ablation", "no-temporal", "--mask", "oracle"][..],
    ] {
        let mut args = vec!["run", &manifest, "--out", o];
        args.extend_from_slice(extra);
        let res = pcfuse(&args);
        assert_eq!(res.status.code(), Some(1), "{extra:?} accepted");
        assert!(String::from_utf8_lossy(&res.stderr).starts_with("error:"));
    }
    assert!(!out.exists(), "rejected run wrote output");
}

#[test]
fn missing_frame_file_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let manifest = make(&data, "static", &[]);
    std::fs::remove_file(data.join("depth/000003.pfm")).unwrap();
    let res = pcfuse(&["run", &manifest, "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("frame 3") && err.contains("000003.pfm"), "{err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let res = pcfuse(&["run", "x.json", "--out", "y", "--no-such-flag"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn export_ply_writes_only_the_cloud() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = make(&tmp.path().join("data"), "static", &[]);
    let ply = tmp.path().join("cloud.ply");
    ok(&["export-ply", &manifest, "--out", ply.to_str().unwrap()]);
    let text = std::fs::read_to_string(&ply).unwrap();
    assert!(text.starts_with("ply\n"));
    let count: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(count > 0);
}
