//! simulate -> analyze -> fit through the binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use twinbeam::spectrum::NoiseSpectrum;

fn twinbeam(args: &[&str]) -> Output {
    let o = Command::new(env!("CARGO_BIN_EXE_twinbeam")).args(args).output().expect("spawn twinbeam");
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Run {
    dir: TempDir,
    cfg: PathBuf,
}

impl Run {
    fn new(toml: &str) -> Self {
        let dir = TempDir::new().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(&cfg, toml).unwrap();
        Self { dir, cfg }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn simulate_and_analyze(&self) -> NoiseSpectrum {
        let trace = self.path("trace.bin");
        twinbeam(&["simulate", "-c", s(&self.cfg), "-o", s(&trace), "--calibrate"]);
        twinbeam(&["analyze", s(&trace), "-c", s(&self.cfg), "-o", s(&self.path("out"))]);
        let text = fs::read_to_string(self.path("out/normalized.csv")).unwrap();
        NoiseSpectrum::read_csv(text.as_bytes()).unwrap()
    }

    fn fit(&self, input: &Path, model: &str) -> Value {
        let o = twinbeam(&["fit", s(input), "--model", model, "-c", s(&self.cfg)]);
        serde_json::from_slice(&o.stdout).unwrap()
    }
}

#[test]
fn squeezing_spectrum_recovers_escape_efficiency() {
    let run = Run::new("[analyzer]\nn_avg = 100\n[sim]\nduration_s = 0.1\nseed = 11\n");
    let spec = run.simulate_and_analyze();
    assert!(spec.normalized && spec.corrected);
    assert_eq!(spec.seed, Some(11));
    let v = run.fit(&run.path("out/normalized.csv"), "squeezing");
    let eta_e = v["params"]["eta_e"].as_f64().unwrap();
    assert!((eta_e - 0.71).abs() < 0.02, "eta_e = {eta_e}");
    assert_eq!(v["converged"], true);

    let summary: Value = serde_json::from_str(&fs::read_to_string(run.path("out/summary.json")).unwrap()).unwrap();
    assert!(summary["calibration_mean_db"].as_f64().unwrap().abs() < 0.05);
    let at_ref = summary["normalized_db_at_fref"].as_f64().unwrap();
    assert!((at_ref + 4.29).abs() < 0.3, "S(3 MHz) = {at_ref} dB");
}

#[test]
fn no_escape_gives_shot_noise() {
    // Coupler far below the loss: escape efficiency ~2e-4.
    let run = Run::new("[cavity]\nt_out = 1e-4\nl_loss = 0.5\n[analyzer]\nn_avg = 100\n[sim]\nduration_s = 0.5\n");
    let spec = run.simulate_and_analyze();
    let db = spec.psd_db();
    let mean = db.iter().sum::<f64>() / db.len() as f64;
    assert!(mean.abs() < 0.05, "mean {mean} dB");
    for (f, v) in spec.freqs_hz.iter().zip(&db) {
        assert!(v.abs() < 0.2, "{v} dB at {f} Hz");
    }
}

#[test]
fn power_sweep_recovers_threshold_and_slope() {
    let run = Run::new("[pump]\np_threshold_mw = 3.1\nslope_eff = 0.55\n[sim]\nduration_s = 0.01\n[analyzer]\nn_avg = 5\n");
    let curve = run.path("curve.csv");
    twinbeam(&["simulate", "-c", s(&run.cfg), "-o", s(&run.path("t.bin")), "--power-curve", s(&curve)]);
    let v = run.fit(&curve, "power");
    let p_th = v["params"]["p_threshold_mw"].as_f64().unwrap();
    let eps = v["params"]["slope_eff"].as_f64().unwrap();
    assert!((p_th - 3.1).abs() < 0.1, "P_th = {p_th}");
    assert!((eps - 0.55).abs() < 0.02, "slope = {eps}");
}
