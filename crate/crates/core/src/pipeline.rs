//! Streaming measurements: photocurrents in, raw spectra out.
//!
//! A measurement produces three raw spectra of the photocurrent difference:
//! the twin-beam data, the shot-noise calibration taken with the half-wave
//! plate at its mixing angle, and a dark run holding only the electronic
//! floor. Electronic noise is added to each difference as it is formed,
//! from its own random stream. Traces are consumed chunk by chunk, so a
//! multi-second record never needs to be held in memory.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::OpoConfig;
use crate::quantum::lorentzian;
use crate::sim::rng::{Stream, CHUNK_LEN};
use crate::sim::{
    channel_gains, split_chunks, ChunkPair, ElectricalNoise, HwpMixer, TraceReader, TwinSource, SHOT_PSD_LEVEL,
};
use crate::spectrum::{analyze, Analysis, ClampPolicy, NoiseSpectrum, PsdAccumulator};

/// Chunks generated in parallel between two sequential feeding passes.
const BATCH_CHUNKS: usize = 64;

/// Raw spectra of one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraSet {
    pub data: NoiseSpectrum,
    pub shot: NoiseSpectrum,
    pub elec: NoiseSpectrum,
}

impl SpectraSet {
    pub fn analyze(&self, policy: ClampPolicy) -> Result<Analysis> {
        analyze(&self.data, &self.shot, &self.elec, policy)
    }
}

/// Mean optical powers behind the plate for beams of powers `p`.
pub fn mixed_powers(p: [f64; 2], hwp_angle_deg: f64) -> [f64; 2] {
    let (c2, s2) = HwpMixer::new(hwp_angle_deg, 0, 1.0, 0.0).split();
    [c2 * p[0] + s2 * p[1], s2 * p[0] + c2 * p[1]]
}

/// Absolute electronic-floor PSD of the difference current, in trace
/// units. Zero when the floor is disabled.
pub fn electrical_psd(cfg: &OpoConfig, eta_e: f64) -> f64 {
    let f_ref = cfg.excess_noise.f_ref_hz;
    let squeezed = 1.0 - cfg.detection.eta_d() * eta_e * lorentzian(f_ref, cfg.cavity.bw_hwhm_hz);
    let dummy = ElectricalNoise::from_detection(&cfg.detection, squeezed, 2.0 * SHOT_PSD_LEVEL, 1.0, 0, Stream::ElecDark);
    dummy.psd()
}

/// Accumulates the three spectra from difference currents.
pub struct MeasurementChain {
    gains_data: [f64; 2],
    gains_cal: [f64; 2],
    elec_data: ElectricalNoise,
    elec_shot: ElectricalNoise,
    elec_dark: ElectricalNoise,
    acc_data: PsdAccumulator,
    acc_shot: PsdAccumulator,
    acc_dark: PsdAccumulator,
    pos_data: usize,
    pos_shot: usize,
    n_samples: usize,
    seed: u64,
    scratch: Vec<f64>,
}

impl MeasurementChain {
    /// `data_power_mw` are the signal and idler powers of the data run; the
    /// calibration powers follow from the configured plate angle.
    pub fn new(
        cfg: &OpoConfig,
        sample_rate_hz: f64,
        n_samples: usize,
        seed: u64,
        data_power_mw: [f64; 2],
        elec_psd: f64,
    ) -> Result<Self> {
        if !(sample_rate_hz > 2.0 * cfg.analyzer.f_stop_hz) {
            return Err(Error::Nyquist {
                sample_rate_hz,
                f_stop_hz: cfg.analyzer.f_stop_hz,
            });
        }
        let balance = cfg.sim.gain_balance;
        let cal_power = mixed_powers(data_power_mw, cfg.detection.hwp_angle_deg);
        let elec = |stream| ElectricalNoise::with_psd(elec_psd, sample_rate_hz, seed, stream);
        let acc = || PsdAccumulator::new(&cfg.analyzer, sample_rate_hz, n_samples);
        Ok(Self {
            gains_data: channel_gains(data_power_mw, balance),
            gains_cal: channel_gains(cal_power, balance),
            elec_data: elec(Stream::ElecData),
            elec_shot: elec(Stream::ElecShot),
            elec_dark: elec(Stream::ElecDark),
            acc_data: acc()?,
            acc_shot: acc()?,
            acc_dark: acc()?,
            pos_data: 0,
            pos_shot: 0,
            n_samples,
            seed,
            scratch: Vec::with_capacity(CHUNK_LEN),
        })
    }

    fn difference(scratch: &mut Vec<f64>, pair: &ChunkPair, gains: [f64; 2]) {
        scratch.clear();
        scratch.extend(pair.signal.iter().zip(&pair.idler).map(|(s, i)| gains[0] * s - gains[1] * i));
    }

    /// Feeds the next samples of the twin-beam record; also advances the
    /// dark run.
    pub fn push_data(&mut self, pair: &ChunkPair) {
        Self::difference(&mut self.scratch, pair, self.gains_data);
        self.elec_data.add_in_place(self.pos_data, &mut self.scratch);
        self.acc_data.push(&self.scratch);

        self.scratch.iter_mut().for_each(|x| *x = 0.0);
        self.elec_dark.add_in_place(self.pos_data, &mut self.scratch);
        self.acc_dark.push(&self.scratch);
        self.pos_data += pair.signal.len();
    }

    /// Feeds the next samples of the plate-mixed calibration record.
    pub fn push_calibration(&mut self, pair: &ChunkPair) {
        Self::difference(&mut self.scratch, pair, self.gains_cal);
        self.elec_shot.add_in_place(self.pos_shot, &mut self.scratch);
        self.acc_shot.push(&self.scratch);
        self.pos_shot += pair.signal.len();
    }

    pub fn finish(self) -> Result<SpectraSet> {
        if self.pos_shot < self.n_samples {
            return Err(Error::InsufficientSamples {
                needed: self.n_samples,
                got: self.pos_shot,
            });
        }
        let tag = |mut s: NoiseSpectrum| {
            s.seed = Some(self.seed);
            s
        };
        Ok(SpectraSet {
            data: tag(self.acc_data.finish()?),
            shot: tag(self.acc_shot.finish()?),
            elec: tag(self.acc_dark.finish()?),
        })
    }
}

/// Generates chunks in parallel batches and hands them to `sink` in order.
/// The data are identical to [`crate::sim::simulate_from_source`].
pub fn for_each_chunk(source: &TwinSource, mut sink: impl FnMut(usize, ChunkPair) -> Result<()>) -> Result<()> {
    let n_chunks = source.n_chunks();
    let mut start = 0;
    while start < n_chunks {
        let end = (start + BATCH_CHUNKS).min(n_chunks);
        let parts = rayon::current_num_threads().max(1);
        let pieces: Vec<(usize, ChunkPair)> = split_chunks(end - start, parts)
            .into_par_iter()
            .flat_map_iter(|r| {
                let r = (r.start + start)..(r.end + start);
                r.map(|c| (c, source.chunk(c))).collect::<Vec<_>>()
            })
            .collect();
        for (c, pair) in pieces {
            sink(c, pair)?;
        }
        start = end;
    }
    Ok(())
}

/// Simulates and measures the configured system without storing traces.
pub fn measure(cfg: &OpoConfig) -> Result<SpectraSet> {
    let source = TwinSource::from_config(cfg)?;
    measure_source(cfg, &source)
}

pub fn measure_source(cfg: &OpoConfig, source: &TwinSource) -> Result<SpectraSet> {
    let fs = source.sample_rate_hz();
    let mixer = HwpMixer::new(cfg.detection.hwp_angle_deg, source.seed(), fs, 2.0 * SHOT_PSD_LEVEL);
    let mut chain = MeasurementChain::new(
        cfg,
        fs,
        source.n_samples(),
        source.seed(),
        source.mean_power_mw(),
        electrical_psd(cfg, source.model().eta_e),
    )?;
    for_each_chunk(source, |c, mut pair| {
        chain.push_data(&pair);
        let ChunkPair { signal, idler } = &mut pair;
        mixer.mix_chunk(c, signal, idler);
        chain.push_calibration(&pair);
        Ok(())
    })?;
    chain.finish()
}

/// Measures from stored traces: the twin-beam record and its plate-mixed
/// calibration record. Beam powers and the electronic floor come from
/// `cfg`; the random streams for the electronic noise come from the seed
/// recorded in the data trace.
pub fn measure_traces<R1: std::io::Read, R2: std::io::Read>(
    cfg: &OpoConfig,
    data: R1,
    calibration: R2,
) -> Result<SpectraSet> {
    let mut data = TraceReader::new(data)?;
    let mut cal = TraceReader::new(calibration)?;
    let (hd, hc) = (data.header(), cal.header());
    if hd.len != hc.len || hd.sample_rate_hz != hc.sample_rate_hz {
        return Err(Error::Format(
            "calibration trace does not match the data trace in length or sample rate".into(),
        ));
    }
    let model = crate::sim::TwinBeamModel::from_config(cfg)?;
    let p = model.total_power_mw;
    let m = model.imbalance;
    let mut chain = MeasurementChain::new(
        cfg,
        hd.sample_rate_hz,
        hd.len as usize,
        hd.seed,
        [0.5 * p * (1.0 + m), 0.5 * p * (1.0 - m)],
        electrical_psd(cfg, model.eta_e),
    )?;
    while let Some(pair) = data.read_pairs(CHUNK_LEN)? {
        chain.push_data(&pair);
    }
    while let Some(pair) = cal.read_pairs(CHUNK_LEN)? {
        chain.push_calibration(&pair);
    }
    chain.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{intensity_difference_spectrum, SqueezingModel};
    use crate::sim::{hwp_pbs_mix, simulate_twin_traces};

    fn short_config() -> OpoConfig {
        let mut cfg = OpoConfig::default();
        cfg.sim.duration_s = Some(0.02);
        cfg.analyzer.n_avg = 10;
        cfg.analyzer.f_start_hz = 1e6;
        cfg.analyzer.f_stop_hz = 10e6;
        cfg
    }

    #[test]
    fn streamed_equals_stored() {
        let mut cfg = short_config();
        cfg.sim.duration_s = Some(0.004);
        cfg.analyzer.n_avg = 2;
        let streamed = measure(&cfg).unwrap();
        let rec = simulate_twin_traces(&cfg, &cfg.sim).unwrap();
        let cal = hwp_pbs_mix(&rec, cfg.detection.hwp_angle_deg);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        rec.write_binary(&mut a).unwrap();
        cal.write_binary(&mut b).unwrap();
        let stored = measure_traces(&cfg, &a[..], &b[..]).unwrap();
        assert_eq!(streamed, stored);
    }

    #[test]
    fn normalized_spectrum_tracks_model() {
        let cfg = short_config();
        let out = measure(&cfg).unwrap().analyze(ClampPolicy::Error).unwrap();
        let model = SqueezingModel::from_params(&cfg.cavity, &cfg.detection).unwrap();
        let dev: Vec<f64> = out
            .normalized
            .freqs_hz
            .iter()
            .zip(&out.normalized.psd)
            .map(|(f, p)| 10.0 * (p / intensity_difference_spectrum(*f, &model).unwrap()).log10())
            .collect();
        // ~2000 independent averages per bin: about 0.15 dB scatter after
        // the floor subtraction and the ratio
        let mean = dev.iter().sum::<f64>() / dev.len() as f64;
        assert!(mean.abs() < 0.05, "{mean}");
        assert!(dev.iter().all(|d| d.abs() < 0.7), "{dev:?}");
    }

    #[test]
    fn calibration_reads_difference_shot_level() {
        let cfg = short_config();
        let set = measure(&cfg).unwrap();
        let a = set.analyze(ClampPolicy::Error).unwrap();
        let mean = a.shot_corrected.psd.iter().sum::<f64>() / a.shot_corrected.len() as f64;
        assert!((10.0 * (mean / 2.0).log10()).abs() < 0.05, "{mean}");
    }

    #[test]
    fn disabled_floor_gives_zero_dark_spectrum() {
        let mut cfg = short_config();
        cfg.detection.elec_floor_rel_db = f64::NEG_INFINITY;
        let set = measure(&cfg).unwrap();
        assert!(set.elec.psd.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn mismatched_calibration_rejected() {
        let mut cfg = short_config();
        cfg.sim.duration_s = Some(0.004);
        cfg.analyzer.n_avg = 2;
        let rec = simulate_twin_traces(&cfg, &cfg.sim).unwrap();
        let mut short = rec.clone();
        short.i_signal.truncate(1000);
        short.i_idler.truncate(1000);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        rec.write_binary(&mut a).unwrap();
        short.write_binary(&mut b).unwrap();
        assert!(matches!(measure_traces(&cfg, &a[..], &b[..]), Err(Error::Format(_))));
    }
}
