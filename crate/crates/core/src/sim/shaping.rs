//! FIR spectral shaping of white noise.
//!
//! A target one-sided PSD `S(f)` on `[0, fs/2]` is realized by filtering
//! unit white noise with a linear-phase FIR whose magnitude response is
//! `sqrt(S(f))`. Taps come from frequency sampling of the amplitude on a
//! dense grid followed by truncation to `2K + 1` coefficients; the in-band
//! PSD matches the target to a few thousandths of a dB for the smooth
//! Lorentzian shapes used here, and unlike a sampled continuous-time
//! recursion there is no aliasing of the tails above Nyquist.

use std::f64::consts::PI;

/// Half-length used for all simulator filters.
pub const DEFAULT_HALF_LEN: usize = 24;

const DESIGN_GRID: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapingFilter {
    taps: Vec<f64>,
}

impl ShapingFilter {
    /// Designs a filter whose power response approximates `target(f_hz)`
    /// for `0 <= f <= fs/2`.
    pub fn design(sample_rate_hz: f64, half_len: usize, target: impl Fn(f64) -> f64) -> Self {
        let m = DESIGN_GRID.max(8 * (2 * half_len + 1));
        let amp: Vec<f64> = (0..m)
            .map(|j| {
                let j = j.min(m - j);
                let f = j as f64 * sample_rate_hz / m as f64;
                target(f).max(0.0).sqrt()
            })
            .collect();
        let k = half_len as isize;
        let taps = (-k..=k)
            .map(|n| {
                let s: f64 = amp
                    .iter()
                    .enumerate()
                    .map(|(j, a)| a * (2.0 * PI * (j as f64) * (n as f64) / m as f64).cos())
                    .sum();
                s / m as f64
            })
            .collect();
        Self { taps }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Samples of input history needed before the first output.
    pub fn history(&self) -> usize {
        self.taps.len() - 1
    }

    /// `|H(f)|^2` of the realized filter.
    pub fn power_response(&self, f_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / sample_rate_hz;
        let (re, im) = self.taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, h)| {
            let ph = w * n as f64;
            (re + h * ph.cos(), im - h * ph.sin())
        });
        re * re + im * im
    }

    /// Sum of squared taps: the output variance for unit-variance input.
    pub fn power_gain(&self) -> f64 {
        self.taps.iter().map(|h| h * h).sum()
    }

    /// Causal convolution. `input` holds `history()` samples of prior
    /// input followed by `out.len()` new samples.
    pub fn apply(&self, input: &[f64], out: &mut [f64]) {
        let hist = self.history();
        assert_eq!(input.len(), out.len() + hist, "input must carry filter history");
        out.fill(0.0);
        let n = out.len();
        for (j, &h) in self.taps.iter().enumerate() {
            let src = &input[hist - j..hist - j + n];
            for (o, &x) in out.iter_mut().zip(src) {
                *o += h * x;
            }
        }
    }
}
