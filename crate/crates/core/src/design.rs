//! Output-coupler trade-offs at a fixed pump budget.
//!
//! A stronger coupler raises the escape efficiency, and with it the
//! achievable squeezing, at the cost of a threshold growing as `(T + L)^2`.
//! When moving away from the reference coupler, the cavity linewidth is
//! scaled by `(T + L)` and the slope efficiency by `η_e`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{output_power_unchecked, threshold_for_coupling};
use crate::error::{Error, Result};
use crate::params::OpoConfig;
use crate::quantum::{best_squeezing_db, escape_efficiency, lorentzian};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub t_out: f64,
    pub p_threshold_mw: f64,
    pub eta_e: f64,
    pub squeezing_floor_db: f64,
    /// Squeezing at the reference frequency of the excess-noise model.
    pub squeezing_at_fref_db: f64,
    /// Total output power at the pump budget.
    pub p_out_mw: f64,
    pub pump_ratio: f64,
    pub bw_hwhm_hz: f64,
    pub slope_eff: f64,
    /// The budget exceeds the threshold.
    pub valid: bool,
}

fn db(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * x.log10()
    }
}

/// Evaluates a coupler `t_new` against the baseline cavity at a pump budget.
/// A budget at or below the new threshold yields `valid == false`.
pub fn evaluate_design(t_new: f64, baseline: &OpoConfig, pump_budget_mw: f64) -> Result<DesignPoint> {
    if !(t_new > 0.0 && t_new < 1.0) {
        return Err(Error::domain(format!("coupler transmission must lie in (0, 1), got {t_new}")));
    }
    if !(pump_budget_mw > 0.0) || !pump_budget_mw.is_finite() {
        return Err(Error::domain(format!("pump budget must be positive, got {pump_budget_mw}")));
    }
    let cav = &baseline.cavity;
    let l = cav.l_loss;
    let p_th = threshold_for_coupling(baseline.pump.p_threshold_mw, cav.t_out, l, t_new)?;
    let eta_e_ref = escape_efficiency(cav.t_out, l)?;
    let eta_e = escape_efficiency(t_new, l)?;
    let eta_d = baseline.detection.eta_d();
    let bw = cav.bw_hwhm_hz * ((t_new + l) / (cav.t_out + l));
    let slope_eff = baseline.pump.slope_eff * eta_e / eta_e_ref;
    let floor = best_squeezing_db(&crate::quantum::SqueezingModel {
        eta_d,
        eta_e,
        bw_hwhm_hz: bw,
    });
    let at_ref = 1.0 - eta_d * eta_e * lorentzian(baseline.excess_noise.f_ref_hz, bw);
    Ok(DesignPoint {
        t_out: t_new,
        p_threshold_mw: p_th,
        eta_e,
        squeezing_floor_db: floor,
        squeezing_at_fref_db: db(at_ref),
        p_out_mw: output_power_unchecked(pump_budget_mw, p_th, slope_eff),
        pump_ratio: pump_budget_mw / p_th,
        bw_hwhm_hz: bw,
        slope_eff,
        valid: pump_budget_mw > p_th,
    })
}

/// Result of the constrained coupler choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplerChoice {
    pub valid: bool,
    /// Closed-form optimum before the `(0, 1)` constraint.
    pub t_unconstrained: f64,
    pub design: Option<DesignPoint>,
}

/// Largest coupler whose threshold stays at `budget / margin`:
/// `T* = (T_ref + L) sqrt(budget / (margin P_th,ref)) - L`.
pub fn optimize_coupler(baseline: &OpoConfig, pump_budget_mw: f64, margin: f64) -> Result<CouplerChoice> {
    if !(margin >= 1.0) || !margin.is_finite() {
        return Err(Error::invalid("margin", "must be a finite ratio >= 1"));
    }
    if !(pump_budget_mw > 0.0) || !pump_budget_mw.is_finite() {
        return Err(Error::invalid("budget", "must be positive"));
    }
    let cav = &baseline.cavity;
    let t_star =
        (cav.t_out + cav.l_loss) * (pump_budget_mw / (margin * baseline.pump.p_threshold_mw)).sqrt() - cav.l_loss;
    if !(t_star > 0.0 && t_star < 1.0) {
        return Ok(CouplerChoice {
            valid: false,
            t_unconstrained: t_star,
            design: None,
        });
    }
    let design = evaluate_design(t_star, baseline, pump_budget_mw)?;
    Ok(CouplerChoice {
        valid: design.valid,
        t_unconstrained: t_star,
        design: Some(design),
    })
}

/// Evaluates every coupler in `t_values`, in parallel.
pub fn design_sweep(baseline: &OpoConfig, pump_budget_mw: f64, t_values: &[f64]) -> Result<Vec<DesignPoint>> {
    t_values
        .par_iter()
        .map(|&t| evaluate_design(t, baseline, pump_budget_mw))
        .collect()
}

/// Sweep CSV with columns
/// `t_out,p_th_mw,eta_e,floor_db,s_at_fref_db,p_out_mw,valid`.
pub fn write_sweep_csv<W: Write>(points: &[DesignPoint], mut w: W) -> Result<()> {
    writeln!(w, "t_out,p_th_mw,eta_e,floor_db,s_at_fref_db,p_out_mw,valid")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.t_out, p.p_threshold_mw, p.eta_e, p.squeezing_floor_db, p.squeezing_at_fref_db, p.p_out_mw, p.valid
        )?;
    }
    Ok(())
}
