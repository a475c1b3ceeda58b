use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use apfbm_harness::manifest::RunManifest;
use serde_json::Value;

fn apfbm(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apfbm"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env_remove("APFBM_SEED")
        .env_remove("APFBM_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let out = dir.join(format!("{name}-out"));
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, format!("output_dir = {:?}\n{body}", out.to_str().unwrap())).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "replicates = 6\nchunk = 4\nhorizon = 5.0\nburn_in_multiplier = 10.0\nformat = \"both\"\n";

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a", SMALL);
    let b = write_config(dir.path(), "b", SMALL);
    for cfg in [&a, &b] {
        let o = apfbm(&["simulate"], cfg);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ma = RunManifest::load(&dir.path().join("a-out/simulate")).unwrap();
    let mb = RunManifest::load(&dir.path().join("b-out/simulate")).unwrap();
    assert!(ma.all_passed());
    let sums = |m: &RunManifest| -> Vec<(String, String)> {
        m.files.iter().filter(|f| f.path != "config.json").map(|f| (f.path.clone(), f.sha256.clone())).collect()
    };
    assert_eq!(sums(&ma), sums(&mb));
    for f in ["paths.csv", "paths.bin", "summary.json"] {
        assert!(ma.files.iter().any(|e| e.path == f), "missing {f}");
    }
    let csv = fs::read_to_string(dir.path().join("a-out/simulate/paths.csv")).unwrap();
    assert_eq!(csv.matches("t,replicate").count(), 1);
    // Solution grid [-10, 5] including the burn-in.
    assert_eq!(csv.lines().count(), 1 + 6 * 301);
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s", SMALL);
    let base = apfbm(&["simulate"], &cfg);
    assert!(base.status.success());
    let first = RunManifest::load(&dir.path().join("s-out/simulate")).unwrap();
    let other = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_apfbm"))
        .args(["simulate", "--config"])
        .arg(&cfg)
        .env("APFBM_SEED", "99")
        .env("APFBM_OUTPUT_DIR", &other)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let second = RunManifest::load(&other.join("simulate")).unwrap();
    assert_ne!(first.config_hash, second.config_hash);
    let csv = |m: &RunManifest| m.files.iter().find(|f| f.path == "paths.csv").unwrap().sha256.clone();
    assert_ne!(csv(&first), csv(&second));
}

#[test]
fn contraction_violation_is_refused_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c", "model = \"custom\"\ncustom_b0 = \"1.5*x + cos(t)\"\n");
    let o = apfbm(&["simulate"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("contraction"), "{}", stderr(&o));
    assert!(!dir.path().join("c-out").exists());
}

#[test]
fn invalid_fields_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad", "dt = -1.0\nhurst = 0.4\nmodel = \"nope\"\n");
    let o = apfbm(&["simulate"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for field in ["dt:", "hurst:", "model:"] {
        assert!(e.contains(field), "missing {field} in {e}");
    }
}

#[test]
fn experiment_summary_schema() {
    let dir = tempfile::tempdir().unwrap();
    let body = "replicates = 8\nchunk = 4\nladder = [5.0, 10.0, 20.0]\nfixed_point_replicates = 3\nburn_in_multiplier = 10.0\n";
    let cfg = write_config(dir.path(), "x", body);
    let o = apfbm(&["experiment"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("x-out/experiment");
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["slope"].is_f64());
    assert!(summary["reference_slope"].is_f64());
    for flag in ["slope_within_0_3", "error_strictly_decreasing", "top_error_below_0_05", "modes_agree"] {
        assert!(summary["pass"][flag].is_boolean(), "missing pass flag {flag}");
    }
    for f in ["series.csv", "samples.csv", "fixed_point.csv", "theta_boxes.svg", "u2_loglog.svg", "ap_deviation.svg"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(RunManifest::load(&out).unwrap().all_passed());
}

#[test]
fn fou_translation_dichotomy() {
    let dir = tempfile::tempdir().unwrap();
    let body = "model = \"fou\"\nreplicates = 200\nchunk = 100\nhorizon = 10.0\ntau = 20.0\n";
    let cfg = write_config(dir.path(), "f", body);
    let o = apfbm(&["translate-check"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("f-out/translate-check/summary.json")).unwrap()).unwrap();
    let theta = summary["theta_ap_deviation"].as_f64().unwrap();
    let plain = summary["plain_ap_deviation"].as_f64().unwrap();
    assert!(plain > 0.5, "plain deviation {plain}");
    assert!(theta < 0.01 * plain, "theta deviation {theta}");
}

#[test]
fn estimate_and_scan_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "e", "replicates = 6\nfixed_point_replicates = 2\nhorizon = 20.0\nburn_in_multiplier = 10.0\n");
    for cmd in ["estimate", "ap-scan"] {
        let o = apfbm(&[cmd], &cfg);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let rows = fs::read_to_string(dir.path().join("e-out/estimate/estimates.csv")).unwrap();
    assert_eq!(rows.lines().filter(|l| l.contains(",oracle,")).count(), 6);
    assert_eq!(rows.lines().filter(|l| l.contains(",fixed_point,")).count(), 2);
    let sk = fs::read_to_string(dir.path().join("e-out/estimate/skorokhod.csv")).unwrap();
    assert_eq!(sk.lines().count(), 7);
}

#[test]
fn accept_exit_code_follows_suites() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "acc", "");
    let o = apfbm(&["accept", "--suites", "3", "--scale", "smoke"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = RunManifest::load(&dir.path().join("acc-out/accept")).unwrap();
    assert_eq!(m.suites.len(), 1);
    assert!(m.all_passed());
    let report = fs::read_to_string(dir.path().join("acc-out/accept/acceptance.txt")).unwrap();
    assert!(report.contains("criterion  3") && report.contains("PASS"));
}
