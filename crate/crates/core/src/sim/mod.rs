//! Time-domain synthesis of the twin photocurrents.
//!
//! Fluctuations are built in the sum/difference basis. Before detection the
//! difference mode has PSD `1 - η_e L(f)` and the sum mode `1 + (A/η_d) L_x(f)`
//! relative to shot noise; each beam then passes a beam splitter of
//! transmissivity `η_d` that mixes in its own vacuum (white) noise. The
//! detected difference is therefore `1 - η_d η_e L(f)` and the detected sum
//! sits at the calibrated excess level.
//!
//! Photocurrents are in shot-normalized units: the shot noise of a beam
//! carrying half the total power has a one-sided PSD of exactly 1 unit²/Hz,
//! so white shot noise sampled at `fs` has variance `fs / 2`. The DC level
//! follows from the detected photon flux.

mod electrical;
mod io;
mod mix;
pub mod rng;
pub mod shaping;

pub use electrical::{add_electrical_noise, ElectricalNoise};
pub use io::{TraceHeader, TraceReader, TraceWriter, TRACE_MAGIC};
pub use mix::{hwp_pbs_mix, HwpMixer};

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{output_power, PowerCurve, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::params::{AnalyzerConfig, ExcessNoiseModel, OpoConfig, PumpParams};
use crate::quantum::{escape_efficiency, lorentzian, SumModeSpectrum};
use rng::{fill_normal, Stream, CHUNK_LEN};
use shaping::{ShapingFilter, DEFAULT_HALF_LEN};

const PLANCK: f64 = 6.626_070_15e-34;

/// One-sided shot-noise PSD of a half-power beam in trace units.
pub const SHOT_PSD_LEVEL: f64 = 1.0;

/// Simulation controls (the `[sim]` config section).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub sample_rate_hz: f64,
    /// Trace length; the analyzer sweep time when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    pub seed: u64,
    /// Number of contiguous work units generated in parallel.
    pub n_segments: usize,
    pub drift_enabled: bool,
    pub drift_pp_fraction: f64,
    pub drift_period_s: f64,
    /// Rescale each photodiode so both mean currents are equal before the
    /// difference is formed.
    pub gain_balance: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 50e6,
            duration_s: None,
            seed: 1,
            n_segments: 8,
            drift_enabled: false,
            drift_pp_fraction: 0.02,
            drift_period_s: 600.0,
            gain_balance: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, analyzer: &AnalyzerConfig) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::invalid("sim.sample_rate_hz", "must be positive"));
        }
        if !(self.sample_rate_hz > 2.0 * analyzer.f_stop_hz) {
            return Err(Error::Nyquist {
                sample_rate_hz: self.sample_rate_hz,
                f_stop_hz: analyzer.f_stop_hz,
            });
        }
        if let Some(d) = self.duration_s {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid("sim.duration_s", "must be positive"));
            }
        }
        if self.n_segments < 1 {
            return Err(Error::invalid("sim.n_segments", "must be >= 1"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::invalid("sim.seed", "must fit in a signed 64-bit integer"));
        }
        if !(0.0..1.0).contains(&self.drift_pp_fraction) {
            return Err(Error::invalid("sim.drift_pp_fraction", "must lie in [0, 1)"));
        }
        if !(self.drift_period_s > 0.0) {
            return Err(Error::invalid("sim.drift_period_s", "must be positive"));
        }
        Ok(())
    }

    pub fn duration(&self, analyzer: &AnalyzerConfig) -> f64 {
        self.duration_s.unwrap_or(analyzer.sweep_s)
    }

    /// Number of samples in a trace.
    pub fn n_samples(&self, analyzer: &AnalyzerConfig) -> usize {
        (self.duration(analyzer) * self.sample_rate_hz).round() as usize
    }
}

/// Physical inputs of the photocurrent model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwinBeamModel {
    pub eta_d: f64,
    /// Escape efficiency; zero gives uncorrelated beams.
    pub eta_e: f64,
    pub bw_hwhm_hz: f64,
    pub excess: ExcessNoiseModel,
    pub imbalance: f64,
    pub total_power_mw: f64,
    pub wavelength_nm: f64,
}

impl TwinBeamModel {
    pub fn from_config(cfg: &OpoConfig) -> Result<Self> {
        Ok(Self {
            eta_d: cfg.detection.eta_d(),
            eta_e: escape_efficiency(cfg.cavity.t_out, cfg.cavity.l_loss)?,
            bw_hwhm_hz: cfg.cavity.bw_hwhm_hz,
            excess: cfg.excess_noise,
            imbalance: cfg.detection.imbalance,
            total_power_mw: output_power(cfg.pump.p_pump_mw, &cfg.pump)?,
            wavelength_nm: cfg.crystal.lambda_deg_nm,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(Error::domain("eta_d must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.eta_e) {
            return Err(Error::domain("eta_e must lie in [0, 1]"));
        }
        if !(self.total_power_mw > 0.0) {
            return Err(Error::domain("no output power: pump is at or below threshold"));
        }
        if !(self.bw_hwhm_hz > 0.0 && self.wavelength_nm > 0.0) {
            return Err(Error::domain("bandwidth and wavelength must be positive"));
        }
        if !(0.0..1.0).contains(&self.imbalance) {
            return Err(Error::domain("imbalance must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Mean detected current of a half-power beam in trace units.
    pub fn mean_level(&self) -> f64 {
        let photon_energy = PLANCK * SPEED_OF_LIGHT / (self.wavelength_nm * 1e-9);
        let electrons_per_s = self.eta_d * 0.5 * self.total_power_mw * 1e-3 / photon_energy;
        // shot PSD 2 e I equals one unit²/Hz, so I / unit = sqrt(rate / 2)
        (electrons_per_s / 2.0).sqrt()
    }
}

/// A pair of sampled photocurrents with their metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub sample_rate_hz: f64,
    pub i_signal: Vec<f64>,
    pub i_idler: Vec<f64>,
    /// Optical power of (signal, idler), mW.
    pub mean_power_mw: [f64; 2],
    pub shot_psd_level: f64,
    pub seed: u64,
}

impl TraceRecord {
    pub fn len(&self) -> usize {
        self.i_signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i_signal.is_empty()
    }

    /// `i_signal - i_idler`.
    pub fn difference(&self) -> Vec<f64> {
        self.i_signal.iter().zip(&self.i_idler).map(|(s, i)| s - i).collect()
    }
}

/// Deterministic chunked generator for one simulated measurement.
#[derive(Debug, Clone)]
pub struct TwinSource {
    model: TwinBeamModel,
    sample_rate_hz: f64,
    n_samples: usize,
    seed: u64,
    drift: Option<(f64, f64)>,
    diff_filter: ShapingFilter,
    sum_filter: ShapingFilter,
    white_std: f64,
    mean_level: f64,
}

/// Signal and idler samples for one chunk.
#[derive(Debug, Clone, Default)]
pub struct ChunkPair {
    pub signal: Vec<f64>,
    pub idler: Vec<f64>,
}

impl TwinSource {
    pub fn from_config(cfg: &OpoConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(TwinBeamModel::from_config(cfg)?, &cfg.sim, cfg.sim.n_samples(&cfg.analyzer))
    }

    pub fn new(model: TwinBeamModel, sim: &SimConfig, n_samples: usize) -> Result<Self> {
        model.validate()?;
        let fs = sim.sample_rate_hz;
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::invalid("sim.sample_rate_hz", "must be positive"));
        }
        let eta_e = model.eta_e;
        let bw = model.bw_hwhm_hz;
        let diff_filter = ShapingFilter::design(fs, DEFAULT_HALF_LEN, |f| 1.0 - eta_e * lorentzian(f, bw));
        let sum = SumModeSpectrum::new(&model.excess);
        let pre_amp = sum.amplitude() / model.eta_d;
        let gamma = sum.gamma_hz();
        let sum_filter = ShapingFilter::design(fs, DEFAULT_HALF_LEN, |f| 1.0 + pre_amp * lorentzian(f, gamma));
        if !diff_filter.taps().iter().chain(sum_filter.taps()).all(|t| t.is_finite()) {
            return Err(Error::domain("non-finite noise-shaping filter"));
        }
        Ok(Self {
            model,
            sample_rate_hz: fs,
            n_samples,
            seed: sim.seed,
            drift: sim
                .drift_enabled
                .then_some((sim.drift_pp_fraction, sim.drift_period_s)),
            diff_filter,
            sum_filter,
            white_std: (SHOT_PSD_LEVEL * fs / 2.0).sqrt(),
            mean_level: model.mean_level(),
        })
    }

    pub fn model(&self) -> &TwinBeamModel {
        &self.model
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_chunks(&self) -> usize {
        self.n_samples.div_ceil(CHUNK_LEN)
    }

    /// Optical power of (signal, idler), mW.
    pub fn mean_power_mw(&self) -> [f64; 2] {
        let p = self.model.total_power_mw;
        let m = self.model.imbalance;
        [0.5 * p * (1.0 + m), 0.5 * p * (1.0 - m)]
    }

    /// Mean currents of (signal, idler) in trace units, without drift.
    pub fn mean_currents(&self) -> [f64; 2] {
        let m = self.model.imbalance;
        [self.mean_level * (1.0 + m), self.mean_level * (1.0 - m)]
    }

    fn chunk_len(&self, chunk: usize) -> usize {
        CHUNK_LEN.min(self.n_samples - chunk * CHUNK_LEN)
    }

    /// Generates chunks `range` (contiguous), appending to `out`.
    pub fn generate_range(&self, range: std::ops::Range<usize>, out: &mut ChunkPair) {
        let hist = self.diff_filter.history();
        debug_assert_eq!(hist, self.sum_filter.history());
        let mut diff_white = vec![0.0; hist + CHUNK_LEN];
        let mut sum_white = vec![0.0; hist + CHUNK_LEN];
        let mut diff = vec![0.0; CHUNK_LEN];
        let mut sum = vec![0.0; CHUNK_LEN];
        let mut vac_s = vec![0.0; CHUNK_LEN];
        let mut vac_i = vec![0.0; CHUNK_LEN];

        // white block j feeds chunk j - 1; block 0 is warm-up history
        let mut fresh = vec![0.0; CHUNK_LEN];
        let prime = |stream: Stream, buf: &mut Vec<f64>, fresh: &mut Vec<f64>| {
            fill_normal(self.seed, stream, range.start as u64, 1.0, fresh);
            buf[..hist].copy_from_slice(&fresh[CHUNK_LEN - hist..]);
        };
        prime(Stream::DiffMode, &mut diff_white, &mut fresh);
        prime(Stream::SumMode, &mut sum_white, &mut fresh);

        let eta_d = self.model.eta_d;
        let (sig_amp, idl_amp) = ((1.0 + self.model.imbalance).sqrt(), (1.0 - self.model.imbalance).sqrt());
        let [mu_s, mu_i] = self.mean_currents();
        let a_det = eta_d.sqrt() * std::f64::consts::FRAC_1_SQRT_2 * self.white_std;
        let a_vac = (1.0 - eta_d).sqrt() * self.white_std;

        for chunk in range {
            let block = chunk as u64 + 1;
            for (stream, buf) in [(Stream::DiffMode, &mut diff_white), (Stream::SumMode, &mut sum_white)] {
                fill_normal(self.seed, stream, block, 1.0, &mut buf[hist..]);
            }
            self.diff_filter.apply(&diff_white, &mut diff);
            self.sum_filter.apply(&sum_white, &mut sum);
            fill_normal(self.seed, Stream::VacuumSignal, chunk as u64, a_vac, &mut vac_s);
            fill_normal(self.seed, Stream::VacuumIdler, chunk as u64, a_vac, &mut vac_i);

            let len = self.chunk_len(chunk);
            let start = chunk * CHUNK_LEN;
            for n in 0..len {
                let g = match self.drift {
                    None => 1.0,
                    Some((pp, period)) => {
                        let t = (start + n) as f64 / self.sample_rate_hz;
                        1.0 + 0.5 * pp * (2.0 * PI * t / period).sin()
                    }
                };
                let y_s = a_det * (sum[n] + diff[n]) + vac_s[n];
                let y_i = a_det * (sum[n] - diff[n]) + vac_i[n];
                out.signal.push(g * mu_s + sig_amp * y_s);
                out.idler.push(g * mu_i + idl_amp * y_i);
            }

            diff_white.copy_within(CHUNK_LEN.., 0);
            sum_white.copy_within(CHUNK_LEN.., 0);
        }
    }

    pub fn chunk(&self, chunk: usize) -> ChunkPair {
        let mut out = ChunkPair::default();
        self.generate_range(chunk..chunk + 1, &mut out);
        out
    }
}

/// Simulates a full trace in memory.
///
/// Chunks are split into `sim.n_segments` contiguous ranges generated in
/// parallel; the result is identical for every segment count.
pub fn simulate_twin_traces(config: &OpoConfig, sim: &SimConfig) -> Result<TraceRecord> {
    let mut cfg = config.clone();
    cfg.sim = sim.clone();
    let source = TwinSource::from_config(&cfg)?;
    Ok(simulate_from_source(&source, sim.n_segments))
}

pub(crate) fn split_chunks(n_chunks: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let parts = parts.clamp(1, n_chunks.max(1));
    (0..parts)
        .map(|p| (p * n_chunks / parts)..((p + 1) * n_chunks / parts))
        .collect()
}

pub fn simulate_from_source(source: &TwinSource, n_segments: usize) -> TraceRecord {
    let pieces: Vec<ChunkPair> = split_chunks(source.n_chunks(), n_segments)
        .into_par_iter()
        .map(|r| {
            let mut out = ChunkPair::default();
            source.generate_range(r, &mut out);
            out
        })
        .collect();
    let mut i_signal = Vec::with_capacity(source.n_samples());
    let mut i_idler = Vec::with_capacity(source.n_samples());
    for p in pieces {
        i_signal.extend_from_slice(&p.signal);
        i_idler.extend_from_slice(&p.idler);
    }
    TraceRecord {
        sample_rate_hz: source.sample_rate_hz(),
        i_signal,
        i_idler,
        mean_power_mw: source.mean_power_mw(),
        shot_psd_level: SHOT_PSD_LEVEL,
        seed: source.seed(),
    }
}

/// Electronic gains that equalize the mean currents of two channels, or
/// unit gains when balancing is off.
pub fn channel_gains(mean_power_mw: [f64; 2], gain_balance: bool) -> [f64; 2] {
    if !gain_balance {
        return [1.0, 1.0];
    }
    let avg = 0.5 * (mean_power_mw[0] + mean_power_mw[1]);
    [avg / mean_power_mw[0], avg / mean_power_mw[1]]
}

/// Relative standard deviation of simulated power-meter readings.
pub const POWER_METER_NOISE: f64 = 0.01;

/// A pump-power sweep as read on a power meter: two points below
/// threshold, then ten evenly spaced up to `pump.p_pump_mw`, each reading
/// carrying `rel_noise` Gaussian relative error.
pub fn simulate_power_curve(pump: &PumpParams, rel_noise: f64, seed: u64) -> Result<PowerCurve> {
    let p_th = pump.p_threshold_mw;
    let lo = 1.2 * p_th;
    if !(pump.p_pump_mw > lo) {
        return Err(Error::invalid("pump.p_pump_mw", "a power sweep needs p_pump_mw > 1.2 * p_threshold_mw"));
    }
    if !(rel_noise >= 0.0) {
        return Err(Error::domain("power-meter noise must be >= 0"));
    }
    let mut pumps = vec![0.5 * p_th, 0.8 * p_th];
    pumps.extend((0..10).map(|i| lo + (pump.p_pump_mw - lo) * i as f64 / 9.0));
    let mut z = vec![0.0; pumps.len()];
    fill_normal(seed, Stream::PowerMeter, 0, rel_noise, &mut z);
    let points = pumps
        .iter()
        .zip(&z)
        .map(|(&p, e)| Ok((p, output_power(p, pump)? * (1.0 + e))))
        .collect::<Result<Vec<_>>>()?;
    PowerCurve::new(points)
}
