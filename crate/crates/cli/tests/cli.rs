use std::path::Path;
use std::process::{Command, Output};

use axisreg_core::geometry::{rotation_error, translation_error};
use axisreg_core::io::load_correspondences;
use axisreg_core::pipeline::{register, RegistrationConfig};
use axisreg_core::report::{GroundTruthJson, ResultJson};
use serde_json::Value;

fn axisreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_axisreg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn synth(dir: &Path, n: &str, eta: &str, sigma: &str, seed: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let k = dir.join(format!("k{seed}.txt"));
    let gt = dir.join(format!("gt{seed}.json"));
    let out = axisreg(&[
        "synth", "--n", n, "--eta", eta, "--sigma", sigma, "--seed", seed, "--output", path_str(&k), "--gt",
        path_str(&gt),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (k, gt)
}

#[test]
fn synth_register_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (k, gt) = synth(dir.path(), "100", "0", "0", "7");
    let result = dir.path().join("out.json");
    let out = axisreg(&["register", "--input", path_str(&k), "--epsilon", "1e-4", "--output", path_str(&result)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let json = read_json(&result);
    for key in [
        "rotation",
        "translation",
        "consensus",
        "axis_inliers",
        "orthogonality_defect",
        "certified",
        "iterations",
        "runtime_ms",
    ] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["rotation"].as_array().unwrap().len(), 9);
    assert_eq!(json["translation"].as_array().unwrap().len(), 3);
    assert_eq!(json["consensus"], 100);

    let out = axisreg(&["eval", "--result", path_str(&result), "--gt", path_str(&gt)]);
    assert_eq!(out.status.code(), Some(0));
    let errors: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(errors["er_deg"].as_f64().unwrap() <= 0.01);
    assert!(errors["et"].as_f64().unwrap() <= 1e-2);
}

#[test]
fn eval_matches_in_process_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (k, gt_path) = synth(dir.path(), "300", "0.4", "0.3", "11");
    let result = dir.path().join("out.json");
    let out = axisreg(&["register", "--input", path_str(&k), "--epsilon", "0.9", "--output", path_str(&result)]);
    assert_eq!(out.status.code(), Some(0));

    let set = load_correspondences(&k).unwrap();
    let res = register(&set, 0.9, &RegistrationConfig::default()).unwrap();
    let gt: GroundTruthJson = serde_json::from_value(read_json(&gt_path)).unwrap();
    let gt = gt.transform().unwrap();
    let er = rotation_error(&gt.rotation, &res.transform.rotation);
    let et = translation_error(&gt.translation, &res.transform.translation);

    let out = axisreg(&["eval", "--result", path_str(&result), "--gt", path_str(&gt_path)]);
    let errors: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((errors["er_deg"].as_f64().unwrap() - er).abs() <= 1e-9);
    assert!((errors["et"].as_f64().unwrap() - et).abs() <= 1e-9);
}

#[test]
fn identical_runs_differ_only_in_timing() {
    let dir = tempfile::tempdir().unwrap();
    let (k, _) = synth(dir.path(), "200", "0.5", "0.5", "3");
    let (k2, _) = synth(dir.path(), "200", "0.5", "0.5", "3");
    assert_eq!(std::fs::read(&k).unwrap(), std::fs::read(&k2).unwrap());

    let run = || {
        let out = axisreg(&["register", "--input", path_str(&k), "--epsilon", "1.5"]);
        assert_eq!(out.status.code(), Some(0));
        let mut v: Value = serde_json::from_slice(&out.stdout).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("runtime_ms");
        obj.remove("axis_runtime_ms");
        v
    };
    assert_eq!(run(), run());
}

#[test]
fn result_json_parses_into_core_type() {
    let dir = tempfile::tempdir().unwrap();
    let (k, _) = synth(dir.path(), "50", "0", "0", "5");
    let out = axisreg(&["register", "--input", path_str(&k), "--epsilon", "1e-4", "--refine"]);
    assert_eq!(out.status.code(), Some(0));
    let parsed: ResultJson = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed.mode, "correspondence");
    assert!(parsed.certified);
}

#[test]
fn spcr_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (p, q, gt) = (dir.path().join("p.xyz"), dir.path().join("q.xyz"), dir.path().join("gt.json"));
    let out = axisreg(&[
        "synth-spcr", "--m", "60", "--rho", "1", "--sigma", "0", "--seed", "2", "--source", path_str(&p),
        "--target", path_str(&q), "--gt", path_str(&gt),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let result = dir.path().join("r.json");
    let out = axisreg(&[
        "spcr", "--source", path_str(&p), "--target", path_str(&q), "--epsilon", "1e-3", "--output",
        path_str(&result),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(&result)["consensus"], 60);
    let out = axisreg(&["eval", "--result", path_str(&result), "--gt", path_str(&gt)]);
    let errors: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(errors["er_deg"].as_f64().unwrap() <= 0.1);
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.json");
    std::fs::write(&config, r#"{"trials": 2, "n": 40, "eta": [0.0, 0.3], "sigma": 0.1, "seed": 1}"#).unwrap();
    let csv = dir.path().join("out.csv");
    let out = axisreg(&["bench", "--config", path_str(&config), "--output", path_str(&csv)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "trial,n,eta,sigma,er_deg,et,consensus,certified,runtime_ms");
    assert_eq!(lines.len(), 5);
}

#[test]
fn missing_flag_is_usage_error() {
    let out = axisreg(&["register", "--epsilon", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--input"), "{stderr}");
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
    assert_eq!(axisreg(&[]).status.code(), Some(2));
    assert_eq!(axisreg(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreadable_input_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = axisreg(&["register", "--input", path_str(&missing), "--epsilon", "0.1"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1 2 3\n").unwrap();
    let out = axisreg(&["register", "--input", path_str(&bad), "--epsilon", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.txt:1"));

    let cloud = dir.path().join("bad.xyz");
    std::fs::write(&cloud, "1 x 3\n").unwrap();
    let out = axisreg(&["spcr", "--source", path_str(&cloud), "--target", path_str(&cloud), "--epsilon", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn degenerate_input_is_registration_failure() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("one.txt");
    // a single correspondence leaves every row feasible, so the three
    // axis rows coincide and no rotation can be assembled
    std::fs::write(&k, "0 0 0 1 1 1\n").unwrap();
    let out = axisreg(&["register", "--input", path_str(&k), "--epsilon", "0.1"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}
