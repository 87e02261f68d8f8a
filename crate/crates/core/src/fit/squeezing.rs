use super::lm::{levenberg_marquardt, LmOptions, Residuals};
use super::FitResult;
use crate::error::{Error, Result};
use crate::quantum::lorentzian;
use crate::spectrum::NoiseSpectrum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingFitOptions {
    /// Detection efficiency held fixed during the fit.
    pub eta_d: f64,
    /// Fit the product `η_d η_e` as one parameter instead, ignoring `eta_d`.
    pub fit_product: bool,
}

impl Default for SqueezingFitOptions {
    fn default() -> Self {
        Self {
            eta_d: 0.90,
            fit_product: false,
        }
    }
}

struct LorentzianDip<'a> {
    freqs: &'a [f64],
    psd: &'a [f64],
    eta_d: f64,
}

impl Residuals for LorentzianDip<'_> {
    fn n_obs(&self) -> usize {
        self.freqs.len()
    }

    fn n_params(&self) -> usize {
        2
    }

    fn data_norm(&self) -> f64 {
        self.psd.iter().map(|y| y * y).sum::<f64>().sqrt()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for ((o, &f), &y) in out.iter_mut().zip(self.freqs).zip(self.psd) {
            *o = 1.0 - self.eta_d * p[0] * lorentzian(f, p[1]) - y;
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        let (eta, bw) = (p[0], p[1]);
        for (row, &f) in out.chunks_exact_mut(2).zip(self.freqs) {
            let l = lorentzian(f, bw);
            row[0] = -self.eta_d * l;
            row[1] = -self.eta_d * eta * l * l * 2.0 * f * f / (bw * bw * bw);
        }
    }

    fn feasible(&self, p: &[f64]) -> bool {
        p[0] > 0.0 && self.eta_d * p[0] <= 1.0 && p[1] > 0.0 && p[1].is_finite()
    }
}

/// Initial bandwidth: where the dip has recovered halfway to shot noise,
/// or extrapolated from the last point when the span ends first.
fn initial_bandwidth(freqs: &[f64], psd: &[f64], depth: f64) -> f64 {
    let i_min = psd
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let half = 1.0 - depth / 2.0;
    for i in i_min + 1..psd.len() {
        if psd[i] >= half {
            let t = (half - psd[i - 1]) / (psd[i] - psd[i - 1]);
            return freqs[i - 1] + t * (freqs[i] - freqs[i - 1]);
        }
    }
    let f_last = *freqs.last().unwrap();
    let l = ((1.0 - psd[psd.len() - 1]) / depth).clamp(0.01, 0.99);
    f_last / (1.0 / l - 1.0).sqrt()
}

/// Fits `S(f) = 1 - η_d η_e / (1 + (f / bw)^2)` to a shot-normalized,
/// electrically corrected spectrum, returning `eta_e` (or `eta_d_eta_e`)
/// and `bw_hwhm_hz`.
pub fn fit_squeezing_spectrum(spec: &NoiseSpectrum, opts: SqueezingFitOptions) -> Result<FitResult> {
    if !spec.normalized {
        return Err(Error::PipelineStage("normalized to shot noise"));
    }
    if !spec.corrected {
        return Err(Error::PipelineStage("corrected for electrical noise"));
    }
    if spec.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 spectrum bins, got {}", spec.len())));
    }
    if spec.psd.iter().chain(&spec.freqs_hz).any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("spectrum contains non-finite values".into()));
    }
    let eta_d = if opts.fit_product { 1.0 } else { opts.eta_d };
    if !(eta_d > 0.0 && eta_d <= 1.0) {
        return Err(Error::invalid("detection.eta_d", "must lie in (0, 1]"));
    }
    let depth = (1.0 - spec.psd.iter().cloned().fold(f64::INFINITY, f64::min)).clamp(0.01, eta_d);
    let p0 = [depth / eta_d, initial_bandwidth(&spec.freqs_hz, &spec.psd, depth)];
    let model = LorentzianDip {
        freqs: &spec.freqs_hz,
        psd: &spec.psd,
        eta_d,
    };
    let out = levenberg_marquardt(&model, &p0, LmOptions::default());
    let first = if opts.fit_product { "eta_d_eta_e" } else { "eta_e" };
    Ok(FitResult::from_outcome(&[first, "bw_hwhm_hz"], out))
}

/// Round-trip loss implied by a coupler transmission and an escape
/// efficiency, `T (1 - η_e) / η_e`.
pub fn infer_loss(t_out: f64, eta_e: f64) -> Result<f64> {
    if !(eta_e > 0.0 && eta_e <= 1.0) {
        return Err(Error::domain(format!("eta_e must lie in (0, 1], got {eta_e}")));
    }
    if !(t_out > 0.0) || !t_out.is_finite() {
        return Err(Error::domain(format!("t_out must be positive, got {t_out}")));
    }
    Ok(t_out * (1.0 - eta_e) / eta_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{escape_efficiency, intensity_difference_spectrum, SqueezingModel};
    use proptest::prelude::*;

    fn analytic(eta_d: f64, eta_e: f64, bw: f64, f_stop: f64) -> NoiseSpectrum {
        let m = SqueezingModel::new(eta_d, eta_e, bw).unwrap();
        let freqs_hz: Vec<f64> = (1..=200).map(|i| f_stop * i as f64 / 200.0).collect();
        NoiseSpectrum {
            psd: freqs_hz.iter().map(|f| intensity_difference_spectrum(*f, &m).unwrap()).collect(),
            freqs_hz,
            rbw_hz: 1e5,
            n_avg: 1,
            normalized: true,
            corrected: true,
            seed: None,
        }
    }

    #[test]
    fn noiseless_roundtrip() {
        let spec = analytic(0.90, 0.71, 23e6, 60e6);
        let fit = fit_squeezing_spectrum(&spec, SqueezingFitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.param("eta_e") / 0.71 - 1.0).abs() < 1e-6);
        assert!((fit.param("bw_hwhm_hz") / 23e6 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn product_mode() {
        let spec = analytic(0.90, 0.71, 23e6, 60e6);
        let opts = SqueezingFitOptions { fit_product: true, ..Default::default() };
        let fit = fit_squeezing_spectrum(&spec, opts).unwrap();
        assert!((fit.param("eta_d_eta_e") / 0.639 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn short_span_still_recovers_noiseless() {
        let spec = analytic(0.90, 0.709, 23e6, 20e6);
        let fit = fit_squeezing_spectrum(&spec, SqueezingFitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.param("eta_e") / 0.709 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn requires_normalized_and_corrected() {
        let mut spec = analytic(0.90, 0.71, 23e6, 60e6);
        spec.corrected = false;
        assert!(matches!(
            fit_squeezing_spectrum(&spec, SqueezingFitOptions::default()),
            Err(Error::PipelineStage(_))
        ));
        spec.corrected = true;
        spec.normalized = false;
        assert!(fit_squeezing_spectrum(&spec, SqueezingFitOptions::default()).is_err());
    }

    #[test]
    fn infer_loss_examples() {
        assert!((infer_loss(0.019, 0.709).unwrap() - 0.0078).abs() < 5e-5);
        assert_eq!(infer_loss(0.05, 1.0).unwrap(), 0.0);
        assert!(infer_loss(0.019, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn infer_loss_inverts_escape_efficiency(t in 1e-3f64..0.5, eta in 0.01f64..=1.0) {
            let l = infer_loss(t, eta).unwrap();
            prop_assert!((escape_efficiency(t, l).unwrap() - eta).abs() < 1e-12);
        }

        #[test]
        fn roundtrip_any_valid_parameters(eta_d in 0.5f64..1.0, eta_e in 0.1f64..0.99, bw in 1e6f64..5e7) {
            let spec = analytic(eta_d, eta_e, bw, 2.5 * bw);
            let fit = fit_squeezing_spectrum(&spec, SqueezingFitOptions { eta_d, fit_product: false }).unwrap();
            prop_assert!(fit.converged);
            prop_assert!((fit.param("eta_e") / eta_e - 1.0).abs() < 1e-6);
            prop_assert!((fit.param("bw_hwhm_hz") / bw - 1.0).abs() < 1e-6);
        }
    }
}
