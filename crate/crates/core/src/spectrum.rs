//! Spectrum-analyzer emulation and the shot-noise normalization pipeline.
//!
//! The estimator is an FFT analyzer: the record is split into `n_avg`
//! sweeps; inside each sweep, Gaussian-windowed segments (half-overlapping,
//! mean removed) are averaged into a one-sided PSD. The Gaussian width is
//! solved so that the window's equivalent noise bandwidth equals the RBW.
//! The video filter is a first-order smoother run along the displayed grid
//! in sweep order with time constant `1 / (2π VBW)`, each point being
//! dwelt on for `sweep_s / K`. Sweeps are then averaged.
//!
//! The measured difference spectrum and the 22.5° calibration spectrum both
//! have the electronic floor subtracted before their ratio is taken; see
//! [`analyze`].

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::params::AnalyzerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpectrum {
    pub freqs_hz: Vec<f64>,
    /// Linear PSD: trace units²/Hz when raw, relative to shot noise when
    /// normalized.
    pub psd: Vec<f64>,
    pub rbw_hz: f64,
    pub n_avg: usize,
    pub normalized: bool,
    /// Electrical noise subtracted.
    pub corrected: bool,
    pub seed: Option<u64>,
}

impl NoiseSpectrum {
    pub fn len(&self) -> usize {
        self.psd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psd.is_empty()
    }

    pub fn psd_db(&self) -> Vec<f64> {
        self.psd.iter().map(|&p| 10.0 * p.log10()).collect()
    }

    /// Linear interpolation of the PSD at `f_hz` inside the grid.
    pub fn value_at(&self, f_hz: f64) -> Option<f64> {
        let i = self.freqs_hz.partition_point(|&f| f < f_hz);
        if i == self.freqs_hz.len() {
            return None;
        }
        if self.freqs_hz[i] == f_hz || i == 0 {
            return (self.freqs_hz[i] == f_hz).then(|| self.psd[i]);
        }
        let (f0, f1) = (self.freqs_hz[i - 1], self.freqs_hz[i]);
        let t = (f_hz - f0) / (f1 - f0);
        Some(self.psd[i - 1] + t * (self.psd[i] - self.psd[i - 1]))
    }

    fn check_same_grid(&self, other: &NoiseSpectrum) -> Result<()> {
        if self.freqs_hz != other.freqs_hz {
            return Err(Error::GridMismatch("frequency grids differ".into()));
        }
        if self.rbw_hz != other.rbw_hz {
            return Err(Error::GridMismatch(format!("rbw {} Hz vs {} Hz", self.rbw_hz, other.rbw_hz)));
        }
        Ok(())
    }

    /// Spectrum CSV: `# key: value` metadata lines, then
    /// `f_hz,psd_linear,psd_db`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# rbw_hz: {}", self.rbw_hz)?;
        writeln!(w, "# n_avg: {}", self.n_avg)?;
        writeln!(w, "# normalized: {}", self.normalized)?;
        writeln!(w, "# corrected: {}", self.corrected)?;
        match self.seed {
            Some(s) => writeln!(w, "# seed: {s}")?,
            None => writeln!(w, "# seed: none")?,
        }
        writeln!(w, "f_hz,psd_linear,psd_db")?;
        for (f, p) in self.freqs_hz.iter().zip(&self.psd) {
            writeln!(w, "{f},{p},{}", 10.0 * p.log10())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut spec = NoiseSpectrum {
            freqs_hz: Vec::new(),
            psd: Vec::new(),
            rbw_hz: f64::NAN,
            n_avg: 0,
            normalized: false,
            corrected: false,
            seed: None,
        };
        let mut saw_header = false;
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let bad = |what: &str| Error::Format(format!("spectrum line {}: {what}: `{line}`", n + 1));
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let Some((key, value)) = meta.split_once(':') else { continue };
                let value = value.trim();
                match key.trim() {
                    "rbw_hz" => spec.rbw_hz = value.parse().map_err(|_| bad("rbw_hz"))?,
                    "n_avg" => spec.n_avg = value.parse().map_err(|_| bad("n_avg"))?,
                    "normalized" => spec.normalized = value.parse().map_err(|_| bad("normalized"))?,
                    "corrected" => spec.corrected = value.parse().map_err(|_| bad("corrected"))?,
                    "seed" => spec.seed = value.parse().ok(),
                    _ => {}
                }
                continue;
            }
            if !saw_header {
                if line != "f_hz,psd_linear,psd_db" {
                    return Err(bad("unexpected header"));
                }
                saw_header = true;
                continue;
            }
            let mut fields = line.split(',');
            let f: f64 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("f_hz"))?;
            let p: f64 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("psd_linear"))?;
            spec.freqs_hz.push(f);
            spec.psd.push(p);
        }
        if !saw_header {
            return Err(Error::Format("spectrum CSV has no header".into()));
        }
        if spec.freqs_hz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format("spectrum frequencies must increase".into()));
        }
        Ok(spec)
    }
}

/// Gaussian window whose equivalent noise bandwidth equals `rbw_hz`.
#[derive(Debug, Clone)]
pub struct ResolutionWindow {
    pub coeffs: Vec<f64>,
    pub sigma_samples: f64,
}

impl ResolutionWindow {
    pub fn new(sample_rate_hz: f64, rbw_hz: f64) -> Self {
        // continuous-limit width, then a bisection on the discrete ENBW
        let sigma0 = sample_rate_hz / (2.0 * PI.sqrt() * rbw_hz);
        let n = ((7.0 * sigma0).ceil() as usize).next_power_of_two().max(16);
        let build = |sigma: f64| -> Vec<f64> {
            let c = (n as f64 - 1.0) / 2.0;
            (0..n).map(|i| (-0.5 * ((i as f64 - c) / sigma).powi(2)).exp()).collect()
        };
        let enbw = |w: &[f64]| -> f64 {
            let s1: f64 = w.iter().sum();
            let s2: f64 = w.iter().map(|x| x * x).sum();
            sample_rate_hz * s2 / (s1 * s1)
        };
        let (mut lo, mut hi) = (0.25 * sigma0, 4.0 * sigma0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            // ENBW falls as the window widens
            if enbw(&build(mid)) > rbw_hz {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let sigma = 0.5 * (lo + hi);
        Self {
            coeffs: build(sigma),
            sigma_samples: sigma,
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn enbw_hz(&self, sample_rate_hz: f64) -> f64 {
        let s1: f64 = self.coeffs.iter().sum();
        let s2: f64 = self.coeffs.iter().map(|x| x * x).sum();
        sample_rate_hz * s2 / (s1 * s1)
    }
}

fn pairwise_sum(rows: &[Vec<f64>]) -> Vec<f64> {
    match rows.len() {
        0 => Vec::new(),
        1 => rows[0].clone(),
        n => {
            let (a, b) = rows.split_at(n / 2);
            let (mut sa, sb) = (pairwise_sum(a), pairwise_sum(b));
            for (x, y) in sa.iter_mut().zip(sb) {
                *x += y;
            }
            sa
        }
    }
}

/// Streaming form of [`psd_estimate`] for records too long to hold in
/// memory. The total length must be known up front to place the sweep
/// boundaries.
pub struct PsdAccumulator {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    window_power: f64,
    n_fft: usize,
    hop: usize,
    k_lo: usize,
    k_hi: usize,
    sample_rate_hz: f64,
    analyzer: AnalyzerConfig,
    sweep_len: usize,
    buf: Vec<f64>,
    head: usize,
    in_sweep: usize,
    seg_sum: Vec<f64>,
    seg_count: usize,
    sweeps: Vec<Vec<f64>>,
    scratch: Vec<Complex<f64>>,
    fft_scratch: Vec<Complex<f64>>,
}

impl PsdAccumulator {
    pub fn new(analyzer: &AnalyzerConfig, sample_rate_hz: f64, total_len: usize) -> Result<Self> {
        analyzer.validate()?;
        if analyzer.f_stop_hz > sample_rate_hz / 2.0 {
            return Err(Error::Nyquist {
                sample_rate_hz,
                f_stop_hz: analyzer.f_stop_hz,
            });
        }
        let rw = ResolutionWindow::new(sample_rate_hz, analyzer.rbw_hz);
        let n_fft = rw.len();
        let sweep_len = total_len / analyzer.n_avg;
        if sweep_len < n_fft {
            return Err(Error::InsufficientSamples {
                needed: n_fft * analyzer.n_avg,
                got: total_len,
            });
        }
        let df = sample_rate_hz / n_fft as f64;
        let k_lo = (analyzer.f_start_hz / df).ceil() as usize;
        let k_hi = ((analyzer.f_stop_hz / df).floor() as usize).min(n_fft / 2);
        if k_hi < k_lo {
            return Err(Error::invalid("analyzer.f_stop_hz", "span narrower than one frequency bin"));
        }
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        let fft_scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        let window_power = rw.coeffs.iter().map(|w| w * w).sum();
        Ok(Self {
            fft,
            window: rw.coeffs,
            window_power,
            n_fft,
            hop: n_fft / 2,
            k_lo,
            k_hi,
            sample_rate_hz,
            analyzer: *analyzer,
            sweep_len,
            buf: Vec::with_capacity(4 * n_fft),
            head: 0,
            in_sweep: 0,
            seg_sum: vec![0.0; k_hi - k_lo + 1],
            seg_count: 0,
            sweeps: Vec::with_capacity(analyzer.n_avg),
            scratch: vec![Complex::default(); n_fft],
            fft_scratch,
        })
    }

    pub fn fft_len(&self) -> usize {
        self.n_fft
    }

    pub fn freqs_hz(&self) -> Vec<f64> {
        let df = self.sample_rate_hz / self.n_fft as f64;
        (self.k_lo..=self.k_hi).map(|k| k as f64 * df).collect()
    }

    pub fn push(&mut self, mut data: &[f64]) {
        while !data.is_empty() && self.sweeps.len() < self.analyzer.n_avg {
            let take = (self.sweep_len - self.in_sweep).min(data.len());
            self.buf.extend_from_slice(&data[..take]);
            self.in_sweep += take;
            data = &data[take..];
            while self.buf.len() - self.head >= self.n_fft {
                self.segment();
                self.head += self.hop;
            }
            if self.head > self.buf.len() / 2 {
                self.buf.drain(..self.head);
                self.head = 0;
            }
            if self.in_sweep == self.sweep_len {
                self.close_sweep();
            }
        }
    }

    fn segment(&mut self) {
        let seg = &self.buf[self.head..self.head + self.n_fft];
        let mean = seg.iter().sum::<f64>() / self.n_fft as f64;
        for ((c, &x), &w) in self.scratch.iter_mut().zip(seg).zip(&self.window) {
            *c = Complex::new((x - mean) * w, 0.0);
        }
        self.fft.process_with_scratch(&mut self.scratch, &mut self.fft_scratch);
        let scale = 1.0 / (self.sample_rate_hz * self.window_power);
        for (k, acc) in (self.k_lo..=self.k_hi).zip(self.seg_sum.iter_mut()) {
            let one_sided = if k == 0 || 2 * k == self.n_fft { 1.0 } else { 2.0 };
            *acc += one_sided * self.scratch[k].norm_sqr() * scale;
        }
        self.seg_count += 1;
    }

    fn close_sweep(&mut self) {
        let n = self.seg_count as f64;
        let mut sweep: Vec<f64> = self.seg_sum.iter().map(|s| s / n).collect();
        video_filter(&mut sweep, &self.analyzer);
        self.sweeps.push(sweep);
        self.seg_sum.iter_mut().for_each(|s| *s = 0.0);
        self.seg_count = 0;
        self.buf.clear();
        self.head = 0;
        self.in_sweep = 0;
    }

    /// Completes the estimate. Fails if fewer samples arrived than declared.
    pub fn finish(self) -> Result<NoiseSpectrum> {
        if self.sweeps.len() < self.analyzer.n_avg {
            return Err(Error::InsufficientSamples {
                needed: self.sweep_len * self.analyzer.n_avg,
                got: self.sweeps.len() * self.sweep_len + self.in_sweep,
            });
        }
        let freqs_hz = self.freqs_hz();
        let n = self.sweeps.len() as f64;
        let psd = pairwise_sum(&self.sweeps).into_iter().map(|s| s / n).collect();
        Ok(NoiseSpectrum {
            freqs_hz,
            psd,
            rbw_hz: self.analyzer.rbw_hz,
            n_avg: self.analyzer.n_avg,
            normalized: false,
            corrected: false,
            seed: None,
        })
    }
}

/// First-order smoothing along the sweep.
fn video_filter(sweep: &mut [f64], analyzer: &AnalyzerConfig) {
    if sweep.is_empty() {
        return;
    }
    let tau = 1.0 / (2.0 * PI * analyzer.vbw_hz);
    let dwell = analyzer.sweep_s / sweep.len() as f64;
    let alpha = 1.0 - (-dwell / tau).exp();
    let mut y = sweep[0];
    for x in sweep.iter_mut() {
        y += alpha * (*x - y);
        *x = y;
    }
}

/// Estimates the one-sided PSD of `trace` as the emulated analyzer would
/// display it.
pub fn psd_estimate(trace: &[f64], analyzer: &AnalyzerConfig, sample_rate_hz: f64) -> Result<NoiseSpectrum> {
    let mut acc = PsdAccumulator::new(analyzer, sample_rate_hz, trace.len())?;
    acc.push(trace);
    acc.finish()
}

/// Pointwise ratio of a data spectrum to the shot-noise spectrum.
pub fn normalize_to_shot(data: &NoiseSpectrum, shot: &NoiseSpectrum) -> Result<NoiseSpectrum> {
    data.check_same_grid(shot)?;
    if data.normalized || shot.normalized {
        return Err(Error::PipelineStage("raw (not yet normalized)"));
    }
    if let Some(bin) = shot.psd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::NonPositiveShot {
            bin,
            f_hz: shot.freqs_hz[bin],
        });
    }
    Ok(NoiseSpectrum {
        psd: data.psd.iter().zip(&shot.psd).map(|(d, s)| d / s).collect(),
        normalized: true,
        corrected: data.corrected && shot.corrected,
        ..data.clone()
    })
}

/// What to do with bins where the electrical floor is not below the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClampPolicy {
    /// Fail: clamping would fabricate squeezing.
    #[default]
    Error,
    /// Replace with a tiny positive value and report the bin.
    Clamp,
}

/// A bin replaced under [`ClampPolicy::Clamp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampedBin {
    pub bin: usize,
    pub f_hz: f64,
    pub value: f64,
}

/// Pointwise linear-power subtraction of the electrical floor.
pub fn subtract_electrical(
    data: &NoiseSpectrum,
    elec: &NoiseSpectrum,
    policy: ClampPolicy,
) -> Result<(NoiseSpectrum, Vec<ClampedBin>)> {
    data.check_same_grid(elec)?;
    if data.normalized || elec.normalized {
        return Err(Error::PipelineStage("raw (not yet normalized)"));
    }
    if data.corrected {
        return Err(Error::PipelineStage("uncorrected"));
    }
    let mut clamped = Vec::new();
    let mut psd = Vec::with_capacity(data.len());
    for (bin, (&d, &e)) in data.psd.iter().zip(&elec.psd).enumerate() {
        if e == 0.0 || d > e {
            psd.push(d - e);
            continue;
        }
        match policy {
            ClampPolicy::Error => {
                return Err(Error::ElectricalExceedsData {
                    bin,
                    f_hz: data.freqs_hz[bin],
                })
            }
            ClampPolicy::Clamp => {
                let value = f64::EPSILON * d.max(e).max(f64::MIN_POSITIVE);
                clamped.push(ClampedBin {
                    bin,
                    f_hz: data.freqs_hz[bin],
                    value,
                });
                psd.push(value);
            }
        }
    }
    Ok((
        NoiseSpectrum {
            psd,
            corrected: true,
            ..data.clone()
        },
        clamped,
    ))
}

/// Output of the normalization pipeline.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub data_corrected: NoiseSpectrum,
    pub shot_corrected: NoiseSpectrum,
    /// `(data - elec) / (shot - elec)`.
    pub normalized: NoiseSpectrum,
    pub clamped: Vec<ClampedBin>,
}

/// Subtracts the electrical floor from both the data and the shot-noise
/// calibration, then normalizes the former by the latter.
pub fn analyze(
    data: &NoiseSpectrum,
    shot: &NoiseSpectrum,
    elec: &NoiseSpectrum,
    policy: ClampPolicy,
) -> Result<Analysis> {
    let (data_corrected, mut clamped) = subtract_electrical(data, elec, policy)?;
    let (shot_corrected, c2) = subtract_electrical(shot, elec, policy)?;
    clamped.extend(c2);
    let normalized = normalize_to_shot(&data_corrected, &shot_corrected)?;
    Ok(Analysis {
        data_corrected,
        shot_corrected,
        normalized,
        clamped,
    })
}
