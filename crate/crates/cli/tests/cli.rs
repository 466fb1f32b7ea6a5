use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn spsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPS_SIM_SEED")
        .output()
        .unwrap()
}

fn spsim_stdin(dir: &Path, args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_spsim"))
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn close(v: &Value, x: f64, tol: f64) -> bool {
    (v.as_f64().unwrap() - x).abs() <= tol
}

#[test]
fn cavity_reference_device() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{
        "cavity": {"center_energy": 1.2960, "linewidth_fwhm": 160e-6, "r_min": 0.4096},
        "emitter": {"lifetime_cavity": 184e-12, "lifetime_bulk": 800e-12, "quantum_yield": 0.59}
    }"#;
    fs::write(dir.path().join("spec.json"), spec).unwrap();
    let b = json(&spsim(dir.path(), &["cavity", "spec.json"]));
    assert!(close(&b["eta_out"], 0.82, 1e-12));
    assert!(close(&b["quality"], 8100.0, 1e-6));
    assert!(close(&b["beta"], 0.813, 1e-3));
    assert!(close(&b["brightness"], 0.393, 1e-3));
}

#[test]
fn cavity_identity_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let b = json(&spsim_stdin(dir.path(), &["cavity", "-"], r#"{"beta": 1, "eta_out": 1, "q_qd": 1}"#));
    assert_eq!(b["brightness"], 1.0);

    let bad = spsim_stdin(dir.path(), &["cavity", "-"], "{not json");
    assert_eq!(bad.status.code(), Some(2));

    let domain = spsim_stdin(
        dir.path(),
        &["cavity", "-"],
        r#"{"emitter": {"lifetime_cavity": 900e-12, "lifetime_bulk": 800e-12, "quantum_yield": 0.5}}"#,
    );
    assert_eq!(domain.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&domain.stderr).contains("lifetime_cavity"));
}

#[test]
fn unknown_config_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"source": {"qon": 0.5}}"#).unwrap();
    let out = spsim(dir.path(), &["simulate", "--config", "cfg.json", "--n-pulses", "1000"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_layout_and_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--run-id", "r", "--n-pulses", "2000000", "--seed", "9"];
    assert!(spsim(dir.path(), &args).status.success());
    let root = dir.path().join("out/r");
    for f in ["tags/merged.spstag", "tags/channel_0.spstag", "tags/channel_5.spstag", "results/summary.json", "report/config.json"] {
        assert!(root.join(f).is_file(), "{f}");
    }
    let snapshot: Vec<Vec<u8>> = ["tags/merged.spstag", "tags/channel_2.spstag", "results/summary.json"]
        .iter()
        .map(|f| fs::read(root.join(f)).unwrap())
        .collect();

    let mut threaded = vec!["--threads", "1"];
    threaded.extend(args);
    assert!(spsim(dir.path(), &threaded).status.success());
    for (f, before) in ["tags/merged.spstag", "tags/channel_2.spstag", "results/summary.json"].iter().zip(&snapshot) {
        assert_eq!(&fs::read(root.join(f)).unwrap(), before, "{f} changed between runs");
    }

    let summary = read_json(&root.join("results/summary.json"));
    let s = &summary["result"];
    assert_eq!(s["n_pulses"], 2_000_000);
    assert_eq!(s["channels"].as_array().unwrap().len(), 6);
    assert_eq!(summary["metadata"]["config"]["run"]["seed"], 9);
    let routed = s["routed"].as_u64().unwrap();
    let discarded = s["discarded"].as_u64().unwrap();
    assert_eq!(routed + discarded, s["emitted"].as_u64().unwrap());
}

#[test]
fn seed_environment_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_spsim"))
        .args(["simulate", "--run-id", "e", "--n-pulses", "10000", "--seed", "1"])
        .current_dir(dir.path())
        .env("SPS_SIM_SEED", "42")
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg = read_json(&dir.path().join("out/e/report/config.json"));
    assert_eq!(cfg["result"]["source"]["rng_seed"], 42);
}

#[test]
fn hbt_run_analyzes_to_low_g2() {
    let dir = tempfile::tempdir().unwrap();
    let sim = spsim(dir.path(), &["simulate", "--run-id", "h", "--layout", "hbt", "--n-pulses", "5000000"]);
    assert!(sim.status.success());
    let out = spsim(dir.path(), &["analyze", "g2", "--input", "out/h/tags/merged.spstag", "--run-id", "h"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&dir.path().join("out/h/results/g2.json"));
    assert!(r["result"]["g2_zero"].as_f64().unwrap() < 0.01);
    assert_eq!(r["metadata"]["inputs"][0]["layout"], "hbt");
    let csv = fs::read_to_string(dir.path().join("out/h/results/g2_histogram.csv")).unwrap();
    assert!(csv.starts_with("tau_ps,count\n"));
}

#[test]
fn analysis_needs_data() {
    let dir = tempfile::tempdir().unwrap();
    assert!(spsim(dir.path(), &["simulate", "--run-id", "s", "--layout", "hbt", "--n-pulses", "100"]).status.success());
    let out = spsim(dir.path(), &["analyze", "blinking", "--input", "out/s/tags/merged.spstag"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn nfold_from_demux_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"source": {"in_fiber_prob": 0.5, "q_on": 0.9}, "run": {"n_pulses": 5100000, "run_id": "n"}}"#,
    )
    .unwrap();
    assert!(spsim(dir.path(), &["simulate", "--config", "cfg.json"]).status.success());
    let t = json(&spsim(dir.path(), &["analyze", "nfold", "--input", "out/n/tags/merged.spstag"]));
    let rows = t["result"]["rows"].as_array().unwrap();
    assert_eq!(rows[0]["n"], 2);
    assert!(rows[0]["event_count"].as_u64().unwrap() > 100);
    assert!(close(&t["result"]["integration_time"], 5_100_000.0 * 12.1e-9, 1e-12));
}

#[test]
fn pn_on_published_rates() {
    let dir = tempfile::tempdir().unwrap();
    let r = json(&spsim(dir.path(), &["analyze", "pn", "--rates", "3:1494.4,4:54.2,5:2.1,6:0.1"]));
    let p = r["result"]["p"].as_f64().unwrap();
    assert!((0.40..=0.55).contains(&p));
    let bad = spsim(dir.path(), &["analyze", "pn", "--rates", "3:-1"]);
    assert_eq!(bad.status.code(), Some(2));
}
