use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn tedecomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tedecomp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn short_scheme() -> Value {
    json!({
        "architecture": "compact",
        "schedule": {"total_steps": 300},
        "log_every": 50,
        "adam": {"learning_rate": 1e-3}
    })
}

#[test]
fn simulate_writes_series_and_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"data": {"kind": "builtin", "network": "fig2a"}}));
    let out = dir.path().join("out");
    let o = tedecomp(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 4);
    assert_eq!(lines.count(), 10_000);
    assert!(out.join("network.json").exists());
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn oracle_reports_one_bit_on_xor_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"data": {"kind": "builtin", "network": "fig2a"}}));
    let out = dir.path().join("out");
    let o = tedecomp(&["oracle", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("oracle.json"));
    let te = r["te"]["value_bits"].as_f64().unwrap();
    assert!((te - 1.0).abs() < 0.05, "{te}");
    assert!((r["local_mean_bits"].as_f64().unwrap() - te).abs() < 1e-9);
    assert!((r["te_future_bits"].as_f64().unwrap() - te).abs() < 1e-9);
}

#[test]
fn config_errors_are_json_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        &json!({"data": {"kind": "builtin", "network": "fig2a"}, "tua": 3, "scheme": {"batch_size": 0}}),
    );
    let o = tedecomp(&["oracle", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "config");
    let v: Vec<&str> = err["violations"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(v.iter().any(|m| m.contains("tua")), "{v:?}");
}

#[test]
fn missing_config_is_rejected() {
    let o = tedecomp(&["decompose"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn decompose_rerun_from_manifest_and_trace_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"data": {"kind": "builtin", "network": "fig2a"}, "scheme": short_scheme(), "seeds": [3]}),
    );
    let a = dir.path().join("a");
    let o = tedecomp(&["decompose", "--config", &cfg, "--out", a.to_str().unwrap(), "--jobs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "seed_3/run_record.csv",
        "seed_3/decomposition.json",
        "seed_3/information_plane.svg",
        "seed_3/shares.svg",
        "seed_3/params_final.bin",
        "seed_3/params_final.json",
        "summary.json",
        "manifest.json",
    ] {
        assert!(a.join(f).exists(), "{f}");
    }

    let b = dir.path().join("b");
    let manifest = a.join("manifest.json");
    let o = tedecomp(&["decompose", "--config", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["seed_3/decomposition.json", "seed_3/run_record.csv", "seed_3/shares.svg"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs on rerun"
        );
    }
    let (ma, mb) = (read_json(&manifest), read_json(&b.join("manifest.json")));
    assert_eq!(ma["seeds"], json!([3]));
    assert_ne!(ma["config_sha256"], mb["config_sha256"], "output directory is part of the config");

    let t = dir.path().join("t");
    let stem = a.join("seed_3/params_final");
    let o = tedecomp(&[
        "trace",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--checkpoint",
        stem.to_str().unwrap(),
        "--out",
        t.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&t.join("trace.json"));
    assert_eq!(r["labels"].as_array().unwrap().len(), 6);
    assert!(r["log_point"].is_null());
    let csv = std::fs::read_to_string(t.join("trace.csv")).unwrap();
    assert!(csv.starts_with("anchor,blue@-3_nats"), "{}", &csv[..40]);
    assert_eq!(csv.lines().count(), r["n_anchors"].as_u64().unwrap() as usize + 1);
}

#[test]
fn pairwise_writes_matrix_for_all_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({
            "data": {"kind": "builtin", "network": "fig2a", "steps": 2000},
            "scheme": short_scheme(),
            "pairwise": {"channels": ["blue", "green"], "steps": 100}
        }),
    );
    let out = dir.path().join("out");
    let o = tedecomp(&["pairwise", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("pairwise.json"));
    assert_eq!(r["result"]["entries"].as_array().unwrap().len(), 2);
    let svg = std::fs::read_to_string(out.join("pairwise.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}
