use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SHORT: &str = "
[analyzer]
n_avg = 10

[sim]
duration_s = 0.02
";

fn twinbeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinbeam")).args(args).output().expect("spawn twinbeam")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_header_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT);
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    for out in [&a, &b] {
        let o = twinbeam(&["simulate", "-c", s(&cfg), "--seed", "7", "-o", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(&bytes[..4], b"TWB1");
    assert_eq!(f64::from_le_bytes(bytes[4..12].try_into().unwrap()), 50e6);
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    assert_eq!(n, 1_000_000);
    assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 7);
    assert_eq!(bytes.len() as u64, 28 + 16 * n);
    assert!(bytes == fs::read(&b).unwrap(), "same seed must give identical traces");

    let manifest = json(&dir.path().join("a.bin.manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["command"], "simulate");
}

#[test]
fn manifest_hash_covers_resolved_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT);
    let out = dir.path().join("t.bin");
    let curve = dir.path().join("curve.csv");
    let o = twinbeam(&["simulate", "-c", s(&cfg), "-o", s(&out), "--power-curve", s(&curve)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(&dir.path().join("t.bin.manifest.json"));
    let text = m["resolved_config"].as_str().unwrap();
    assert_eq!(m["config_sha256"].as_str().unwrap(), twinbeam::cli::config_hash(text));
    assert!(text.contains("duration_s = 0.02"));
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.contains(&s(&curve)));
}

#[test]
fn nyquist_violation_exits_2_and_names_the_constraint() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[sim]\nsample_rate_hz = 30e6\nduration_s = 0.01\n");
    let o = twinbeam(&["simulate", "-c", s(&cfg), "-o", s(&dir.path().join("t.bin"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sample_rate_hz > 2 * f_stop_hz"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(twinbeam(&["design", "--budget", "21"]).status.code(), Some(2));
    assert_eq!(twinbeam(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn analyze_without_calibration_exits_4() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT);
    let trace = dir.path().join("t.bin");
    assert!(twinbeam(&["simulate", "-c", s(&cfg), "-o", s(&trace)]).status.success());
    let o = twinbeam(&["analyze", s(&trace), "-c", s(&cfg), "-o", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("--calibrate"), "{}", stderr(&o));
}

#[test]
fn analyze_rejects_a_corrupt_trace() {
    let dir = TempDir::new().unwrap();
    let trace = write(dir.path(), "t.bin", "not a trace");
    write(dir.path(), "t.bin.cal", "not a trace");
    let o = twinbeam(&["analyze", s(&trace), "-o", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn fit_recorded_power_curve() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/power_curve.csv");
    let o = twinbeam(&["fit", fixture, "--model", "power"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let p_th = v["params"]["p_threshold_mw"].as_f64().unwrap();
    let eps = v["params"]["slope_eff"].as_f64().unwrap();
    assert!((p_th - 2.5).abs() < 0.05, "P_th = {p_th}");
    assert!((eps - 0.65).abs() < 0.01, "slope = {eps}");
    assert_eq!(v["converged"], true);
}

#[test]
fn fit_noiseless_curve_roundtrips() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("p_pump_mw,p_out_mw\n");
    for i in 0..12 {
        let p = 3.0 + i as f64;
        text += &format!("{p},{}\n", 2.0 * 0.6 * ((2.0 * p).sqrt() - 2.0));
    }
    let csv = write(dir.path(), "curve.csv", &text);
    let out = dir.path().join("fit.json");
    let o = twinbeam(&["fit", s(&csv), "--model", "power", "-o", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&out);
    assert!((v["params"]["p_threshold_mw"].as_f64().unwrap() - 2.0).abs() < 1e-8);
    assert!((v["params"]["slope_eff"].as_f64().unwrap() - 0.6).abs() < 1e-8);
    assert!(dir.path().join("fit.json.manifest.json").exists());
}

#[test]
fn fit_with_too_few_points_exits_3() {
    let dir = TempDir::new().unwrap();
    let csv = write(dir.path(), "curve.csv", "p_pump_mw,p_out_mw\n1,0\n3,0.5\n4,0.9\n");
    let o = twinbeam(&["fit", s(&csv), "--model", "power"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn design_examples() {
    let o = twinbeam(&["design", "--budget", "21", "--margin", "1.3125"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["valid"], true);
    let d = &v["design"];
    assert!((d["t_out"].as_f64().unwrap() - 0.06).abs() < 1e-3);
    assert!((d["p_threshold_mw"].as_f64().unwrap() - 16.0).abs() < 0.05);

    let o = twinbeam(&["design", "--budget", "0.1", "--margin", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["valid"], false);
}

#[test]
fn design_sweep_is_monotone() {
    let o = twinbeam(&["design", "--budget", "21", "--sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (ip, ie) = (col("p_th_mw"), col("eta_e"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect()).collect();
    assert_eq!(rows.len(), 30);
    for w in rows.windows(2) {
        assert!(w[1][ip] > w[0][ip]);
        assert!(w[1][ie] > w[0][ie]);
    }
}
