//! Steady-state classical behavior: output power above threshold, coupling
//! dependence of the threshold, conversion efficiencies and temperature
//! tuning of the signal and idler wavelengths.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::params::{CrystalTuning, PumpParams};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Total output power `2 ε (sqrt(P_th P_p) - P_th)` above threshold and
/// exactly zero at or below it.
pub fn output_power(p_pump_mw: f64, pump: &PumpParams) -> Result<f64> {
    if !(p_pump_mw >= 0.0) || !p_pump_mw.is_finite() {
        return Err(Error::domain(format!("pump power must be >= 0, got {p_pump_mw}")));
    }
    Ok(output_power_unchecked(p_pump_mw, pump.p_threshold_mw, pump.slope_eff))
}

pub(crate) fn output_power_unchecked(p_pump: f64, p_th: f64, slope_eff: f64) -> f64 {
    if p_pump <= p_th {
        0.0
    } else {
        2.0 * slope_eff * ((p_th * p_pump).sqrt() - p_th)
    }
}

/// Threshold after changing the output coupler, using the `(T + L)^2`
/// scaling of the oscillation threshold.
pub fn threshold_for_coupling(p_th_ref_mw: f64, t_ref: f64, l_loss: f64, t_new: f64) -> Result<f64> {
    if !(p_th_ref_mw > 0.0) {
        return Err(Error::domain("reference threshold must be positive"));
    }
    for (name, v) in [("t_ref", t_ref), ("t_new", t_new)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::domain(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    if !(l_loss >= 0.0 && l_loss < 1.0) {
        return Err(Error::domain(format!("l_loss must lie in [0, 1), got {l_loss}")));
    }
    let ratio = (t_new + l_loss) / (t_ref + l_loss);
    Ok(p_th_ref_mw * ratio * ratio)
}

/// `(P_out / P_pump, P_out / P_fundamental)`.
pub fn conversion_efficiencies(p_pump_mw: f64, p_out_mw: f64, p_fundamental_mw: f64) -> Result<(f64, f64)> {
    if !(p_pump_mw > 0.0) || !(p_fundamental_mw > 0.0) {
        return Err(Error::domain("pump and fundamental powers must be positive"));
    }
    if !(p_out_mw >= 0.0) {
        return Err(Error::domain("output power must be >= 0"));
    }
    Ok((p_out_mw / p_pump_mw, p_out_mw / p_fundamental_mw))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavelengthPair {
    pub lambda_signal_nm: f64,
    pub lambda_idler_nm: f64,
}

/// Signal and idler wavelengths at a crystal temperature.
///
/// Tuning is linear and symmetric in optical frequency around the
/// degenerate point, so `ν_s + ν_i = 2 ν_deg` holds by construction. The
/// idler is the branch whose wavelength grows with temperature.
pub fn wavelengths_at_temperature(temp_c: f64, tuning: &CrystalTuning) -> Result<WavelengthPair> {
    if !(temp_c >= tuning.t_min_c && temp_c <= tuning.t_max_c) {
        return Err(Error::domain(format!(
            "temperature {temp_c} °C outside operating window [{}, {}] °C",
            tuning.t_min_c, tuning.t_max_c
        )));
    }
    let nu_deg = SPEED_OF_LIGHT / (tuning.lambda_deg_nm * 1e-9);
    let delta = tuning.k_nu_ghz_per_c * 1e9 * (tuning.t_deg_c - temp_c);
    let nu_idler = nu_deg + delta;
    let nu_signal = nu_deg - delta;
    if !(nu_signal > 0.0) {
        return Err(Error::domain("temperature too far from degeneracy"));
    }
    Ok(WavelengthPair {
        lambda_signal_nm: SPEED_OF_LIGHT / nu_signal * 1e9,
        lambda_idler_nm: SPEED_OF_LIGHT / nu_idler * 1e9,
    })
}

/// Measured or synthetic (pump, output) samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCurve {
    points: Vec<(f64, f64)>,
}

impl PowerCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(p, o)) in points.iter().enumerate() {
            if !(p >= 0.0 && o >= 0.0 && p.is_finite() && o.is_finite()) {
                return Err(Error::invalid("points", format!("point {i} has a negative or non-finite value")));
            }
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid("points", "pump powers must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// Samples the model on the given pump grid.
    pub fn from_model(pumps: &[f64], pump: &PumpParams) -> Result<Self> {
        let points = pumps
            .iter()
            .map(|&p| output_power(p, pump).map(|o| (p, o)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reads the `p_pump_mw,p_out_mw` CSV format.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty power-curve file".into()))??;
        if header.trim() != "p_pump_mw,p_out_mw" {
            return Err(Error::Format(format!("unexpected power-curve header `{}`", header.trim())));
        }
        let mut points = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',');
            let mut next = || -> Result<f64> {
                fields
                    .next()
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad power-curve line {}: `{line}`", n + 2)))
            };
            let p = next()?;
            let o = next()?;
            points.push((p, o));
        }
        Self::new(points)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "p_pump_mw,p_out_mw")?;
        for &(p, o) in &self.points {
            writeln!(w, "{p},{o}")?;
        }
        Ok(())
    }
}
