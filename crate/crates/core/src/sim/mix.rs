//! Half-wave plate + polarizing beam splitter in front of the detectors.
//!
//! Rotating the plate by `θ` turns the polarization by `φ = 2θ`. On the
//! intensity level the two PBS outputs are
//!
//! ```text
//! I_1 = cos²φ I_s + sin²φ I_i + ½ sin 2φ · b
//! I_2 = sin²φ I_s + cos²φ I_i − ½ sin 2φ · b
//! ```
//!
//! where `b` is the in-band part of the signal–idler beat, white with the
//! shot-noise PSD of the total power. At 22.5° the intensity terms cancel in
//! `I_1 − I_2` and only shot noise remains.

use super::rng::{fill_normal, Stream, CHUNK_LEN};
use super::TraceRecord;

#[derive(Debug, Clone, Copy)]
pub struct HwpMixer {
    cos2: f64,
    sin2: f64,
    beat: f64,
    beat_std: f64,
    seed: u64,
}

impl HwpMixer {
    /// `total_shot_psd` is the one-sided shot PSD of the summed beams.
    pub fn new(angle_deg: f64, seed: u64, sample_rate_hz: f64, total_shot_psd: f64) -> Self {
        let phi = (2.0 * angle_deg).to_radians();
        let (s, c) = phi.sin_cos();
        Self {
            cos2: c * c,
            sin2: s * s,
            beat: 0.5 * (2.0 * phi).sin(),
            beat_std: (total_shot_psd * sample_rate_hz / 2.0).sqrt(),
            seed,
        }
    }

    /// Power split `(to output 1, to output 2)` for a beam entering on the
    /// signal port.
    pub fn split(&self) -> (f64, f64) {
        (self.cos2, self.sin2)
    }

    /// Mixes one chunk in place. `chunk` is the global chunk index.
    pub fn mix_chunk(&self, chunk: usize, signal: &mut [f64], idler: &mut [f64]) {
        assert_eq!(signal.len(), idler.len());
        assert!(signal.len() <= CHUNK_LEN);
        let mut beat = vec![0.0; CHUNK_LEN];
        if self.beat != 0.0 {
            fill_normal(self.seed, Stream::HwpBeat, chunk as u64, self.beat_std, &mut beat);
        }
        for ((s, i), b) in signal.iter_mut().zip(idler.iter_mut()).zip(&beat) {
            let (xs, xi) = (*s, *i);
            let cross = self.beat * b;
            *s = self.cos2 * xs + self.sin2 * xi + cross;
            *i = self.sin2 * xs + self.cos2 * xi - cross;
        }
    }
}

/// Applies the plate/PBS mixing to a whole record. The beat noise is drawn
/// from the record seed, so the result is reproducible.
pub fn hwp_pbs_mix(rec: &TraceRecord, angle_deg: f64) -> TraceRecord {
    let mixer = HwpMixer::new(angle_deg, rec.seed, rec.sample_rate_hz, 2.0 * rec.shot_psd_level);
    let mut out = rec.clone();
    for (chunk, (s, i)) in out
        .i_signal
        .chunks_mut(CHUNK_LEN)
        .zip(out.i_idler.chunks_mut(CHUNK_LEN))
        .enumerate()
    {
        mixer.mix_chunk(chunk, s, i);
    }
    let [ps, pi] = rec.mean_power_mw;
    let (c2, s2) = mixer.split();
    out.mean_power_mw = [c2 * ps + s2 * pi, s2 * ps + c2 * pi];
    out
}
