//! Analytic noise spectra, all expressed relative to the shot-noise level
//! of the total detected power.
//!
//! The intensity-difference spectrum of the twin beams is a Lorentzian dip
//! below shot noise,
//!
//! ```text
//! S(f) = 1 - η_d η_e / (1 + (f / bw)^2)
//! ```
//!
//! with escape efficiency `η_e = T / (T + L)`.

use crate::error::{Error, Result};
use crate::params::{CavityParams, DetectionParams, ExcessNoiseModel};

/// Fraction of the intracavity correlation leaving through the coupler.
pub fn escape_efficiency(t_out: f64, l_loss: f64) -> Result<f64> {
    if !(t_out > 0.0) || !t_out.is_finite() {
        return Err(Error::domain(format!("t_out must be positive, got {t_out}")));
    }
    if !(l_loss >= 0.0) || !l_loss.is_finite() {
        return Err(Error::domain(format!("l_loss must be >= 0, got {l_loss}")));
    }
    Ok(t_out / (t_out + l_loss))
}

/// Parameters of the intensity-difference squeezing spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingModel {
    pub eta_d: f64,
    pub eta_e: f64,
    pub bw_hwhm_hz: f64,
}

impl SqueezingModel {
    pub fn new(eta_d: f64, eta_e: f64, bw_hwhm_hz: f64) -> Result<Self> {
        for (name, v) in [("eta_d", eta_d), ("eta_e", eta_e)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(bw_hwhm_hz > 0.0) || !bw_hwhm_hz.is_finite() {
            return Err(Error::domain("bandwidth must be positive"));
        }
        Ok(Self { eta_d, eta_e, bw_hwhm_hz })
    }

    /// The model implied by a cavity and detection chain.
    pub fn from_params(cavity: &CavityParams, detection: &DetectionParams) -> Result<Self> {
        let eta_e = escape_efficiency(cavity.t_out, cavity.l_loss)?;
        Self::new(detection.eta_d(), eta_e, cavity.bw_hwhm_hz)
    }

    /// Product `η_d η_e`, the depth of the dip at zero frequency.
    pub fn depth(&self) -> f64 {
        self.eta_d * self.eta_e
    }
}

/// Cavity Lorentzian `1 / (1 + (f / hwhm)^2)`.
pub(crate) fn lorentzian(f_hz: f64, hwhm_hz: f64) -> f64 {
    let x = f_hz / hwhm_hz;
    1.0 / (1.0 + x * x)
}

/// Intensity-difference noise power relative to shot noise at `f_hz`.
pub fn intensity_difference_spectrum(f_hz: f64, model: &SqueezingModel) -> Result<f64> {
    if !(f_hz >= 0.0) {
        return Err(Error::domain(format!("frequency must be >= 0, got {f_hz}")));
    }
    Ok(1.0 - model.depth() * lorentzian(f_hz, model.bw_hwhm_hz))
}

/// Zero-frequency floor `10 log10(1 - η_d η_e)` in dB.
///
/// A perfect system (`η_d η_e = 1`) has no finite floor and reports
/// `f64::NEG_INFINITY`.
pub fn best_squeezing_db(model: &SqueezingModel) -> f64 {
    let floor = 1.0 - model.depth();
    if floor <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * floor.log10()
    }
}

/// Calibrated common-mode excess noise spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumModeSpectrum {
    amplitude: f64,
    gamma_hz: f64,
}

impl SumModeSpectrum {
    pub fn new(excess: &ExcessNoiseModel) -> Self {
        let at_ref = 10f64.powf(excess.excess_db_at_ref / 10.0) - 1.0;
        Self {
            amplitude: at_ref / lorentzian(excess.f_ref_hz, excess.gamma_excess_hz),
            gamma_hz: excess.gamma_excess_hz,
        }
    }

    /// Lorentzian amplitude `A` above shot noise at zero frequency.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn gamma_hz(&self) -> f64 {
        self.gamma_hz
    }

    pub fn at(&self, f_hz: f64) -> f64 {
        1.0 + self.amplitude * lorentzian(f_hz, self.gamma_hz)
    }
}

/// Sum-mode (single-beam) noise relative to shot noise,
/// `1 + A / (1 + (f / γ)^2)` with `A` set by the configured level at the
/// reference frequency.
pub fn sum_mode_spectrum(f_hz: f64, excess: &ExcessNoiseModel) -> Result<f64> {
    if !(f_hz >= 0.0) {
        return Err(Error::domain(format!("frequency must be >= 0, got {f_hz}")));
    }
    Ok(SumModeSpectrum::new(excess).at(f_hz))
}

/// Absolute electrical-noise level relative to the shot-noise level, given
/// the squeezed level at the reference frequency. Returns 0 when disabled.
pub fn electrical_floor_relative(detection: &DetectionParams, squeezed_at_ref: f64) -> f64 {
    if detection.elec_floor_rel_db == f64::NEG_INFINITY {
        0.0
    } else {
        squeezed_at_ref * 10f64.powf(detection.elec_floor_rel_db / 10.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::db_from_ratio;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn escape_efficiency_examples() {
        assert!((escape_efficiency(0.019, 0.0078).unwrap() - 0.709).abs() < 5e-4);
        assert_eq!(escape_efficiency(0.02, 0.0).unwrap(), 1.0);
        assert!((escape_efficiency(0.06, 0.0078).unwrap() - 0.885).abs() < 5e-4);
        assert!(escape_efficiency(0.0, 0.01).is_err());
        assert!(escape_efficiency(-0.1, 0.01).is_err());
    }

    #[test]
    fn spectrum_examples() {
        let m = SqueezingModel::new(0.90, 0.709, 23e6).unwrap();
        let s0 = intensity_difference_spectrum(0.0, &m).unwrap();
        assert_relative_eq!(s0, 1.0 - 0.9 * 0.709, max_relative = 1e-15);
        assert!((db_from_ratio(s0).unwrap() + 4.41).abs() < 0.005);

        let far = intensity_difference_spectrum(1e15, &m).unwrap();
        assert!((far - 1.0).abs() < 1e-12);

        let m = SqueezingModel::new(0.90, 0.71, 23e6).unwrap();
        let s3 = db_from_ratio(intensity_difference_spectrum(3e6, &m).unwrap()).unwrap();
        assert!((s3 + 4.30).abs() < 0.02, "{s3}");
        assert!(intensity_difference_spectrum(-1.0, &m).is_err());
    }

    #[test]
    fn floor_examples() {
        let m = SqueezingModel::new(0.90, 0.885, 23e6).unwrap();
        let db = best_squeezing_db(&m);
        assert!((db + 6.9).abs() < 0.05, "{db}");
        assert!((1.0 - m.depth() - 0.2035).abs() < 1e-9);

        let perfect = SqueezingModel::new(1.0, 1.0, 23e6).unwrap();
        assert_eq!(best_squeezing_db(&perfect), f64::NEG_INFINITY);

        let m = SqueezingModel::new(0.90, 0.709, 23e6).unwrap();
        assert!((best_squeezing_db(&m) + 4.41).abs() < 0.005);
    }

    #[test]
    fn sum_mode_examples() {
        let ex = ExcessNoiseModel::default();
        assert_relative_eq!(sum_mode_spectrum(3e6, &ex).unwrap(), 10f64.powf(0.8), max_relative = 1e-12);
        assert!((sum_mode_spectrum(1e15, &ex).unwrap() - 1.0).abs() < 1e-9);
        let flat = ExcessNoiseModel { excess_db_at_ref: 0.0, ..ex };
        for f in [0.0, 1e6, 3e6, 1e8] {
            assert_eq!(sum_mode_spectrum(f, &flat).unwrap(), 1.0);
        }
    }

    #[test]
    fn model_rejects_bad_efficiency() {
        assert!(SqueezingModel::new(0.0, 0.5, 1e6).is_err());
        assert!(SqueezingModel::new(0.5, 1.2, 1e6).is_err());
        assert!(SqueezingModel::new(0.5, 0.5, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn spectrum_monotone_and_bounded(eta_d in 0.01f64..=1.0, eta_e in 0.01f64..=1.0, bw in 1e5f64..1e9,
                                         f1 in 0.0f64..1e9, df in 0.0f64..1e9) {
            let m = SqueezingModel::new(eta_d, eta_e, bw).unwrap();
            let a = intensity_difference_spectrum(f1, &m).unwrap();
            let b = intensity_difference_spectrum(f1 + df, &m).unwrap();
            prop_assert!(b >= a);
            prop_assert!(a >= 1.0 - m.depth() && a <= 1.0);
            prop_assert!(a < 1.0);
        }

        #[test]
        fn escape_efficiency_monotone(t in 1e-4f64..0.5, l in 0.0f64..0.5, d in 1e-4f64..0.1) {
            let e = escape_efficiency(t, l).unwrap();
            prop_assert!(escape_efficiency(t + d, l).unwrap() > e);
            prop_assert!(escape_efficiency(t, l + d).unwrap() < e);
            prop_assert!(((e * (t + l) - t) / t).abs() < 1e-15);
        }

        #[test]
        fn zero_frequency_matches_floor(eta_d in 0.01f64..1.0, eta_e in 0.01f64..1.0) {
            let m = SqueezingModel::new(eta_d, eta_e, 1e7).unwrap();
            let s = db_from_ratio(intensity_difference_spectrum(0.0, &m).unwrap()).unwrap();
            prop_assert!((s - best_squeezing_db(&m)).abs() < 1e-12);
        }

        #[test]
        fn sum_mode_at_least_shot(x in 0.0f64..20.0, f_ref in 1e5f64..1e8, g in 1e5f64..1e8, f in 0.0f64..1e9) {
            let ex = ExcessNoiseModel { excess_db_at_ref: x, f_ref_hz: f_ref, gamma_excess_hz: g };
            prop_assert!(sum_mode_spectrum(f, &ex).unwrap() >= 1.0);
            let at_ref = sum_mode_spectrum(f_ref, &ex).unwrap();
            let want = 10f64.powf(x / 10.0);
            prop_assert!(((at_ref - want) / want).abs() < 1e-9);
        }
    }
}
