//! Stationary white electronic noise added to a difference photocurrent.

use super::rng::{fill_normal, Stream, CHUNK_LEN};
use crate::params::DetectionParams;
use crate::quantum::electrical_floor_relative;

#[derive(Debug, Clone, Copy)]
pub struct ElectricalNoise {
    psd: f64,
    std: f64,
    seed: u64,
    stream: Stream,
}

impl ElectricalNoise {
    /// Noise whose one-sided PSD is `psd` (trace units²/Hz).
    pub fn with_psd(psd: f64, sample_rate_hz: f64, seed: u64, stream: Stream) -> Self {
        Self {
            psd,
            std: (psd * sample_rate_hz / 2.0).sqrt(),
            seed,
            stream,
        }
    }

    /// Floor placed `elec_floor_rel_db` below the squeezed difference level
    /// `squeezed_at_ref` (relative to shot noise) on a channel whose shot
    /// level is `shot_psd`.
    pub fn from_detection(
        detection: &DetectionParams,
        squeezed_at_ref: f64,
        shot_psd: f64,
        sample_rate_hz: f64,
        seed: u64,
        stream: Stream,
    ) -> Self {
        let rel = electrical_floor_relative(detection, squeezed_at_ref);
        Self::with_psd(rel * shot_psd, sample_rate_hz, seed, stream)
    }

    pub fn psd(&self) -> f64 {
        self.psd
    }

    pub fn is_silent(&self) -> bool {
        self.psd == 0.0
    }

    /// Adds noise to `buf`, whose first sample has global index `start`.
    pub fn add_in_place(&self, start: usize, buf: &mut [f64]) {
        if self.is_silent() || buf.is_empty() {
            return;
        }
        let mut noise = vec![0.0; CHUNK_LEN];
        let mut pos = start;
        let end = start + buf.len();
        while pos < end {
            let chunk = pos / CHUNK_LEN;
            let offset = pos % CHUNK_LEN;
            let take = (CHUNK_LEN - offset).min(end - pos);
            fill_normal(self.seed, self.stream, chunk as u64, self.std, &mut noise);
            for (b, n) in buf[pos - start..pos - start + take].iter_mut().zip(&noise[offset..]) {
                *b += n;
            }
            pos += take;
        }
    }
}

/// Returns `trace` plus electrical noise (trace unchanged when the floor is
/// disabled with `-inf`).
pub fn add_electrical_noise(trace: &[f64], noise: &ElectricalNoise) -> Vec<f64> {
    let mut out = trace.to_vec();
    noise.add_in_place(0, &mut out);
    out
}
