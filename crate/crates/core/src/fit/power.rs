use super::lm::{levenberg_marquardt, LmOptions, Residuals};
use super::FitResult;
use crate::classical::{output_power_unchecked, PowerCurve};
use crate::error::{Error, Result};

struct PowerModel<'a> {
    points: &'a [(f64, f64)],
}

impl Residuals for PowerModel<'_> {
    fn n_obs(&self) -> usize {
        self.points.len()
    }

    fn n_params(&self) -> usize {
        2
    }

    fn data_norm(&self) -> f64 {
        self.points.iter().map(|(_, y)| y * y).sum::<f64>().sqrt()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (o, &(pp, y)) in out.iter_mut().zip(self.points) {
            *o = output_power_unchecked(pp, p[0], p[1]) - y;
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        let (p_th, eps) = (p[0], p[1]);
        for (row, &(pp, _)) in out.chunks_exact_mut(2).zip(self.points) {
            if pp <= p_th {
                row.fill(0.0);
            } else {
                row[0] = 2.0 * eps * (0.5 * (pp / p_th).sqrt() - 1.0);
                row[1] = 2.0 * ((p_th * pp).sqrt() - p_th);
            }
        }
    }

    fn feasible(&self, p: &[f64]) -> bool {
        p[0] > 0.0 && p[1] > 0.0 && p.iter().all(|v| v.is_finite())
    }
}

/// Fits threshold `p_threshold_mw` and slope efficiency `slope_eff` to an
/// output-power curve.
///
/// Points at or below the current threshold estimate count with a model
/// value of zero. At least three points with positive output are needed.
pub fn fit_power_curve(curve: &PowerCurve) -> Result<FitResult> {
    let points = curve.points();
    let positive: Vec<f64> = points.iter().filter(|(_, y)| *y > 0.0).map(|(p, _)| *p).collect();
    if positive.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 points above threshold, got {}",
            positive.len()
        )));
    }
    let p_th0 = positive.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(p_th0 > 0.0) {
        return Err(Error::InsufficientData("positive output at zero pump".into()));
    }
    let out = levenberg_marquardt(&PowerModel { points }, &[p_th0, 0.5], LmOptions::default());
    Ok(FitResult::from_outcome(&["p_threshold_mw", "slope_eff"], out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::PumpParams;
    use crate::sim::rng::{fill_normal, Stream};
    use proptest::prelude::*;

    fn pumps() -> Vec<f64> {
        (0..10).map(|i| 3.0 + 13.0 * i as f64 / 9.0).collect()
    }

    #[test]
    fn noiseless_roundtrip() {
        let curve = PowerCurve::from_model(&pumps(), &PumpParams::default()).unwrap();
        let fit = fit_power_curve(&curve).unwrap();
        assert!(fit.converged);
        assert!((fit.param("p_threshold_mw") / 2.5 - 1.0).abs() < 1e-6);
        assert!((fit.param("slope_eff") / 0.65 - 1.0).abs() < 1e-6);
        assert!(fit.std_error("slope_eff") >= 0.0);
    }

    #[test]
    fn includes_points_below_threshold() {
        let mut pts: Vec<f64> = vec![0.5, 1.0, 2.0];
        pts.extend(pumps());
        let curve = PowerCurve::from_model(&pts, &PumpParams::default()).unwrap();
        let fit = fit_power_curve(&curve).unwrap();
        assert!(fit.converged);
        assert!((fit.param("p_threshold_mw") / 2.5 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn recorded_curve_fixture() {
        let text = include_str!("../../fixtures/power_curve.csv");
        let curve = PowerCurve::read_csv(text.as_bytes()).unwrap();
        let fit = fit_power_curve(&curve).unwrap();
        assert!(fit.converged);
        assert!((fit.param("p_threshold_mw") - 2.5).abs() < 0.05);
        assert!((fit.param("slope_eff") - 0.65).abs() < 0.01);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let curve = PowerCurve::new(vec![(1.0, 0.0), (4.0, 1.0), (9.0, 2.0)]).unwrap();
        assert!(matches!(fit_power_curve(&curve), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn one_percent_noise_monte_carlo() {
        let truth = PumpParams::default();
        let mut good = 0;
        let mut bias = [0.0; 2];
        let mut se = [0.0; 2];
        for seed in 0..100 {
            let mut z = vec![0.0; 10];
            fill_normal(seed, Stream::DiffMode, 0, 0.01, &mut z);
            let pts = pumps()
                .iter()
                .zip(&z)
                .map(|(&p, e)| (p, output_power_unchecked(p, 2.5, 0.65) * (1.0 + e)))
                .collect();
            let fit = fit_power_curve(&PowerCurve::new(pts).unwrap()).unwrap();
            assert!(fit.converged);
            let (pth, eps) = (fit.param("p_threshold_mw"), fit.param("slope_eff"));
            if (pth / truth.p_threshold_mw - 1.0).abs() < 0.05 && (eps / truth.slope_eff - 1.0).abs() < 0.03 {
                good += 1;
            }
            bias[0] += (pth - truth.p_threshold_mw) / 100.0;
            bias[1] += (eps - truth.slope_eff) / 100.0;
            se[0] += fit.std_error("p_threshold_mw") / 100.0;
            se[1] += fit.std_error("slope_eff") / 100.0;
        }
        assert!(good >= 95, "{good}");
        assert!(bias[0].abs() < se[0] && bias[1].abs() < se[1], "{bias:?} {se:?}");
    }

    proptest! {
        #[test]
        fn roundtrip_any_valid_parameters(p_th in 0.5f64..20.0, eps in 0.05f64..1.0) {
            let pts: Vec<f64> = (1..=10).map(|i| p_th * (1.2 + 0.5 * i as f64)).collect();
            let pump = PumpParams { p_threshold_mw: p_th, slope_eff: eps, ..PumpParams::default() };
            let fit = fit_power_curve(&PowerCurve::from_model(&pts, &pump).unwrap()).unwrap();
            prop_assert!(fit.converged);
            prop_assert!((fit.param("p_threshold_mw") / p_th - 1.0).abs() < 1e-6);
            prop_assert!((fit.param("slope_eff") / eps - 1.0).abs() < 1e-6);
        }

        #[test]
        fn scale_equivariance(c in 0.1f64..10.0, seed in 0u64..1000) {
            let mut z = vec![0.0; 10];
            fill_normal(seed, Stream::SumMode, 0, 0.01, &mut z);
            let base: Vec<(f64, f64)> = pumps()
                .iter()
                .zip(&z)
                .map(|(&p, e)| (p, output_power_unchecked(p, 2.5, 0.65) * (1.0 + e)))
                .collect();
            let scaled: Vec<(f64, f64)> = base.iter().map(|&(p, y)| (c * p, c * y)).collect();
            let a = fit_power_curve(&PowerCurve::new(base).unwrap()).unwrap();
            let b = fit_power_curve(&PowerCurve::new(scaled).unwrap()).unwrap();
            prop_assert!((b.param("p_threshold_mw") / (c * a.param("p_threshold_mw")) - 1.0).abs() < 1e-6);
            prop_assert!((b.param("slope_eff") / a.param("slope_eff") - 1.0).abs() < 1e-6);
        }
    }
}
