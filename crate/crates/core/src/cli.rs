//! The `twinbeam` command line.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 a fit that
//! did not converge (or had too little data), 4 file I/O or format errors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::classical::PowerCurve;
use crate::design::{design_sweep, optimize_coupler, write_sweep_csv};
use crate::error::{Error, Result};
use crate::fit::{fit_power_curve, fit_squeezing_spectrum, FitResult, SqueezingFitOptions};
use crate::params::{load_config, OpoConfig};
use crate::pipeline::{for_each_chunk, measure_traces};
use crate::sim::{
    simulate_power_curve, HwpMixer, TraceHeader, TraceWriter, TwinSource, POWER_METER_NOISE, SHOT_PSD_LEVEL,
};
use crate::spectrum::{ClampPolicy, NoiseSpectrum};

#[derive(Debug, Parser)]
#[command(name = "twinbeam", version, about = "Twin-beam intensity-difference squeezing toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate signal and idler photocurrents to a binary trace.
    Simulate(SimulateArgs),
    /// Turn traces into raw, calibration and normalized spectra.
    Analyze(AnalyzeArgs),
    /// Fit a power curve or a normalized squeezing spectrum.
    Fit(FitArgs),
    /// Choose or sweep the output coupler at a pump budget.
    Design(DesignArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML parameter file; built-in defaults when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Master seed; overrides `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output trace path.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the shot-noise calibration trace (plate at
    /// `detection.hwp_angle_deg`) to `<out>.cal`.
    #[arg(long)]
    pub calibrate: bool,
    /// Also record a pump-power sweep of the output power to this CSV.
    #[arg(long)]
    pub power_curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Twin-beam trace written by `simulate`.
    pub trace: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    /// Calibration trace; defaults to `<trace>.cal`.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Clamp bins where the electrical floor reaches the data instead of
    /// failing.
    #[arg(long)]
    pub clamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitModel {
    Power,
    Squeezing,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Power-curve CSV or spectrum CSV.
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub model: FitModel,
    #[command(flatten)]
    pub config: ConfigArg,
    /// Fixed detection efficiency; `detection` of the config when omitted.
    #[arg(long)]
    pub eta_d: Option<f64>,
    /// Fit the product of detection and escape efficiency.
    #[arg(long)]
    pub fit_product: bool,
    /// Write the JSON here instead of standard output.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Available pump power, mW.
    #[arg(long)]
    pub budget: f64,
    /// Required ratio of pump budget to threshold.
    #[arg(long, required_unless_present = "sweep", conflicts_with = "sweep")]
    pub margin: Option<f64>,
    /// Tabulate designs over a coupler grid instead.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, default_value_t = 0.005)]
    pub t_min: f64,
    #[arg(long, default_value_t = 0.15)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.005)]
    pub t_step: f64,
    /// Write the result here instead of standard output.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Provenance of a command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub config_sha256: String,
    pub resolved_config: String,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub timestamp_unix: u64,
}

impl RunManifest {
    fn new(command: &str, config: &ResolvedConfig, seed: Option<u64>, outputs: Vec<PathBuf>) -> Self {
        let text = config.cfg.to_toml_string();
        Self {
            command: command.to_string(),
            config_path: config.path.clone(),
            config_sha256: config_hash(&text),
            resolved_config: text,
            seed,
            outputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }
}

/// SHA-256 of the resolved config text, hex encoded.
pub fn config_hash(resolved_toml: &str) -> String {
    Sha256::digest(resolved_toml.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

struct ResolvedConfig {
    path: Option<PathBuf>,
    cfg: OpoConfig,
}

fn resolve(arg: &ConfigArg) -> Result<ResolvedConfig> {
    let cfg = match &arg.config {
        Some(p) => load_config(p)?,
        None => OpoConfig::default(),
    };
    Ok(ResolvedConfig {
        path: arg.config.clone(),
        cfg,
    })
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InsufficientData(_) | Error::NotConverged { .. } => 3,
        Error::Io(_) | Error::Format(_) | Error::MissingCalibration(_) => 4,
        _ => 2,
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn simulate(args: &SimulateArgs) -> Result<RunManifest> {
    let mut rc = resolve(&args.config)?;
    if let Some(seed) = args.seed {
        rc.cfg.sim.seed = seed;
        rc.cfg.validate()?;
    }
    let cfg = &rc.cfg;
    let source = TwinSource::from_config(cfg)?;
    let header = TraceHeader {
        sample_rate_hz: source.sample_rate_hz(),
        len: source.n_samples() as u64,
        seed: source.seed(),
    };
    let cal_path = sibling(&args.out, ".cal");
    let mut data = TraceWriter::new(create(&args.out)?, header)?;
    let mut cal = match args.calibrate {
        true => Some(TraceWriter::new(create(&cal_path)?, header)?),
        false => None,
    };
    let mixer = HwpMixer::new(cfg.detection.hwp_angle_deg, source.seed(), source.sample_rate_hz(), 2.0 * SHOT_PSD_LEVEL);
    for_each_chunk(&source, |c, mut pair| {
        data.write_pairs(&pair.signal, &pair.idler)?;
        if let Some(w) = cal.as_mut() {
            mixer.mix_chunk(c, &mut pair.signal, &mut pair.idler);
            w.write_pairs(&pair.signal, &pair.idler)?;
        }
        Ok(())
    })?;
    data.finish()?;
    let mut outputs = vec![args.out.clone()];
    if let Some(w) = cal {
        w.finish()?;
        outputs.push(cal_path);
    }
    if let Some(path) = &args.power_curve {
        let curve = simulate_power_curve(&cfg.pump, POWER_METER_NOISE, source.seed())?;
        let mut w = create(path)?;
        curve.write_csv(&mut w)?;
        w.flush()?;
        outputs.push(path.clone());
    }
    let manifest = RunManifest::new("simulate", &rc, Some(source.seed()), outputs);
    manifest.write(&sibling(&args.out, ".manifest.json"))?;
    Ok(manifest)
}

/// Headline numbers of an analysis.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSummary {
    pub f_ref_hz: f64,
    pub normalized_db_at_fref: Option<f64>,
    pub min_normalized_db: f64,
    pub min_f_hz: f64,
    /// Mean electrically corrected calibration level relative to the
    /// expected shot level of the difference current.
    pub calibration_mean_db: f64,
    pub calibration_max_abs_db: f64,
    pub clamped_bins: Vec<usize>,
}

pub fn analyze(args: &AnalyzeArgs) -> Result<RunManifest> {
    let rc = resolve(&args.config)?;
    let cal_path = args.calibration.clone().unwrap_or_else(|| sibling(&args.trace, ".cal"));
    if !cal_path.exists() {
        return Err(Error::MissingCalibration(cal_path));
    }
    let set = measure_traces(&rc.cfg, open(&args.trace)?, open(&cal_path)?)?;
    let policy = if args.clamp { ClampPolicy::Clamp } else { ClampPolicy::Error };
    let a = set.analyze(policy)?;
    for c in &a.clamped {
        eprintln!("warning: bin {} ({} Hz) clamped to {:e}", c.bin, c.f_hz, c.value);
    }

    std::fs::create_dir_all(&args.out)?;
    let files: [(&str, &NoiseSpectrum); 4] = [
        ("difference_raw.csv", &set.data),
        ("shot_calibration.csv", &set.shot),
        ("electrical.csv", &set.elec),
        ("normalized.csv", &a.normalized),
    ];
    let mut outputs = Vec::new();
    for (name, spec) in files {
        let path = args.out.join(name);
        let mut w = create(&path)?;
        spec.write_csv(&mut w)?;
        w.flush()?;
        outputs.push(path);
    }

    let norm_db = a.normalized.psd_db();
    let (i_min, min_db) = norm_db
        .iter()
        .cloned()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap_or((0, f64::NAN));
    let cal_db: Vec<f64> = a
        .shot_corrected
        .psd
        .iter()
        .map(|p| 10.0 * (p / (2.0 * SHOT_PSD_LEVEL)).log10())
        .collect();
    let f_ref = rc.cfg.excess_noise.f_ref_hz;
    let mean_cal = a.shot_corrected.psd.iter().sum::<f64>() / a.shot_corrected.len() as f64;
    let summary = AnalysisSummary {
        f_ref_hz: f_ref,
        normalized_db_at_fref: a.normalized.value_at(f_ref).map(|v| 10.0 * v.log10()),
        min_normalized_db: min_db,
        min_f_hz: a.normalized.freqs_hz.get(i_min).copied().unwrap_or(f64::NAN),
        calibration_mean_db: 10.0 * (mean_cal / (2.0 * SHOT_PSD_LEVEL)).log10(),
        calibration_max_abs_db: cal_db.iter().fold(0.0, |m, v| v.abs().max(m)),
        clamped_bins: a.clamped.iter().map(|c| c.bin).collect(),
    };
    let summary_path = args.out.join("summary.json");
    let mut w = create(&summary_path)?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    outputs.push(summary_path);

    let manifest = RunManifest::new("analyze", &rc, a.normalized.seed, outputs);
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(manifest)
}

pub fn fit(args: &FitArgs) -> Result<FitResult> {
    let rc = resolve(&args.config)?;
    let result = match args.model {
        FitModel::Power => fit_power_curve(&PowerCurve::read_csv(open(&args.input)?)?)?,
        FitModel::Squeezing => {
            let spec = NoiseSpectrum::read_csv(open(&args.input)?)?;
            let opts = SqueezingFitOptions {
                eta_d: args.eta_d.unwrap_or_else(|| rc.cfg.detection.eta_d()),
                fit_product: args.fit_product,
            };
            fit_squeezing_spectrum(&spec, opts)?
        }
    };
    let json = result.to_json();
    emit(args.out.as_deref(), &json, "fit", &rc)?;
    Ok(result)
}

pub fn design(args: &DesignArgs) -> Result<String> {
    let rc = resolve(&args.config)?;
    let text = if args.sweep {
        if !(args.t_step > 0.0 && args.t_min > 0.0 && args.t_max < 1.0 && args.t_min <= args.t_max) {
            return Err(Error::invalid("t_step", "sweep needs 0 < t_min <= t_max < 1 and t_step > 0"));
        }
        let n = ((args.t_max - args.t_min) / args.t_step + 1e-9).floor() as usize + 1;
        let ts: Vec<f64> = (0..n).map(|i| args.t_min + i as f64 * args.t_step).collect();
        let points = design_sweep(&rc.cfg, args.budget, &ts)?;
        let mut buf = Vec::new();
        write_sweep_csv(&points, &mut buf)?;
        String::from_utf8(buf).expect("csv is utf-8")
    } else {
        let margin = args.margin.expect("clap enforces --margin without --sweep");
        let choice = optimize_coupler(&rc.cfg, args.budget, margin)?;
        serde_json::to_string_pretty(&choice).map_err(|e| Error::Format(e.to_string()))?
    };
    emit(args.out.as_deref(), &text, "design", &rc)?;
    Ok(text)
}

fn emit(out: Option<&Path>, text: &str, command: &str, rc: &ResolvedConfig) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{}", text.trim_end())?;
            w.flush()?;
            RunManifest::new(command, rc, None, vec![path.to_path_buf()]).write(&sibling(path, ".manifest.json"))
        }
        None => match writeln!(std::io::stdout().lock(), "{}", text.trim_end()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => Ok(r?),
        },
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| 0),
        Command::Analyze(a) => analyze(a).map(|_| 0),
        Command::Fit(a) => fit(a).map(|r| {
            if r.converged {
                0
            } else {
                eprintln!("error: {}", Error::NotConverged { n_iter: r.n_iter });
                3
            }
        }),
        Command::Design(a) => design(a).map(|_| 0),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}
