//! Shared parameter types, validation, dB helpers and config-file loading.
//!
//! Every type carries the measured operating point of the reference
//! experiment as its `Default`, so an empty config file resolves to a
//! complete, valid [`OpoConfig`]. The file format is a flat `key = value`
//! listing grouped under `[section]` headers:
//!
//! ```
//! let cfg = twinbeam::params::OpoConfig::from_toml_str(
//!     "[analyzer]\nrbw_hz = 50e3\n",
//! ).unwrap();
//! assert_eq!(cfg.analyzer.rbw_hz, 50e3);
//! assert_eq!(cfg.cavity.t_out, 0.019);
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SimConfig;

/// Power ratio to decibels, `10 log10(r)`.
pub fn db_from_ratio(r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("dB of non-positive ratio {r}")));
    }
    Ok(10.0 * r.log10())
}

/// Inverse of [`db_from_ratio`].
pub fn ratio_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Signal-idler cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavityParams {
    /// Output-coupler power transmission.
    pub t_out: f64,
    /// Residual round-trip loss.
    pub l_loss: f64,
    /// Half-width at half-maximum of the signal/idler resonance, Hz.
    pub bw_hwhm_hz: f64,
    /// Pump input-coupler transmission (informational only).
    pub t_pump_in: f64,
}

impl Default for CavityParams {
    fn default() -> Self {
        Self {
            t_out: 0.019,
            l_loss: 0.0078,
            bw_hwhm_hz: 23e6,
            t_pump_in: 0.035,
        }
    }
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_out > 0.0 && self.t_out < 1.0) {
            return Err(Error::invalid("cavity.t_out", format!("must satisfy 0 < t_out < 1, got {}", self.t_out)));
        }
        if !(self.l_loss >= 0.0 && self.l_loss < 1.0) {
            return Err(Error::invalid("cavity.l_loss", format!("must satisfy 0 <= l_loss < 1, got {}", self.l_loss)));
        }
        if !(self.t_out + self.l_loss < 1.0) {
            return Err(Error::invalid("cavity.l_loss", "t_out + l_loss must be < 1"));
        }
        if !(self.bw_hwhm_hz > 0.0 && self.bw_hwhm_hz.is_finite()) {
            return Err(Error::invalid("cavity.bw_hwhm_hz", "must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.t_pump_in) {
            return Err(Error::invalid("cavity.t_pump_in", "must be a fraction in [0, 1]"));
        }
        Ok(())
    }
}

/// Pump and classical power-law parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpParams {
    pub p_pump_mw: f64,
    pub p_threshold_mw: f64,
    /// Power slope efficiency ε.
    pub slope_eff: f64,
    /// Fundamental (pre-doubling) laser power, used for the overall
    /// classical-to-nonclassical conversion efficiency.
    pub p_fundamental_mw: f64,
}

impl Default for PumpParams {
    fn default() -> Self {
        Self {
            p_pump_mw: 16.0,
            p_threshold_mw: 2.5,
            slope_eff: 0.65,
            p_fundamental_mw: 44.2,
        }
    }
}

impl PumpParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("pump.p_pump_mw", self.p_pump_mw),
            ("pump.p_threshold_mw", self.p_threshold_mw),
            ("pump.p_fundamental_mw", self.p_fundamental_mw),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, format!("power must be >= 0, got {v}")));
            }
        }
        if !(self.slope_eff > 0.0 && self.slope_eff <= 1.0) {
            return Err(Error::invalid("pump.slope_eff", format!("must satisfy 0 < slope_eff <= 1, got {}", self.slope_eff)));
        }
        Ok(())
    }
}

/// Phenomenological temperature tuning around degeneracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrystalTuning {
    pub t_deg_c: f64,
    pub lambda_deg_nm: f64,
    /// Symmetric frequency tuning rate of each beam away from degeneracy.
    pub k_nu_ghz_per_c: f64,
    /// Accepted operating window for tuning queries.
    pub t_min_c: f64,
    pub t_max_c: f64,
}

impl Default for CrystalTuning {
    fn default() -> Self {
        Self {
            t_deg_c: 76.2,
            lambda_deg_nm: 1080.4,
            k_nu_ghz_per_c: 13.4,
            t_min_c: 0.0,
            t_max_c: 150.0,
        }
    }
}

impl CrystalTuning {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_deg_nm > 0.0 && self.lambda_deg_nm.is_finite()) {
            return Err(Error::invalid("crystal.lambda_deg_nm", "must be positive"));
        }
        if !(self.k_nu_ghz_per_c > 0.0 && self.k_nu_ghz_per_c.is_finite()) {
            return Err(Error::invalid("crystal.k_nu_ghz_per_c", "must be positive"));
        }
        if !(self.t_min_c < self.t_max_c) {
            return Err(Error::invalid("crystal.t_min_c", "t_min_c must be below t_max_c"));
        }
        if !self.t_deg_c.is_finite() {
            return Err(Error::invalid("crystal.t_deg_c", "must be finite"));
        }
        Ok(())
    }
}

/// Detection chain: efficiencies, imbalance, calibration optics and the
/// electronic noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionParams {
    pub eta_quantum: f64,
    pub eta_transmission: f64,
    /// Fractional power imbalance `(P_s - P_i) / (P_s + P_i)`.
    pub imbalance: f64,
    /// Half-wave-plate angle used for the shot-noise calibration pass.
    pub hwp_angle_deg: f64,
    /// Electronic floor relative to the squeezed difference level at the
    /// reference frequency, dB. `-inf` disables electrical noise.
    pub elec_floor_rel_db: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            eta_quantum: 0.92,
            eta_transmission: 0.98,
            imbalance: 0.03,
            hwp_angle_deg: 22.5,
            elec_floor_rel_db: -5.0,
        }
    }
}

impl DetectionParams {
    /// Total detection efficiency η_d.
    pub fn eta_d(&self) -> f64 {
        self.eta_quantum * self.eta_transmission
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("detection.eta_quantum", self.eta_quantum),
            ("detection.eta_transmission", self.eta_transmission),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(key, format!("efficiency must lie in (0, 1], got {v}")));
            }
        }
        if !(self.imbalance >= 0.0 && self.imbalance < 1.0) {
            return Err(Error::invalid("detection.imbalance", format!("must satisfy 0 <= imbalance < 1, got {}", self.imbalance)));
        }
        if !self.hwp_angle_deg.is_finite() {
            return Err(Error::invalid("detection.hwp_angle_deg", "must be finite"));
        }
        if self.elec_floor_rel_db.is_nan() || self.elec_floor_rel_db == f64::INFINITY {
            return Err(Error::invalid("detection.elec_floor_rel_db", "must be finite or -inf"));
        }
        Ok(())
    }
}

/// Common-mode technical noise carried by both beams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcessNoiseModel {
    pub excess_db_at_ref: f64,
    pub f_ref_hz: f64,
    pub gamma_excess_hz: f64,
}

impl Default for ExcessNoiseModel {
    fn default() -> Self {
        Self {
            excess_db_at_ref: 8.0,
            f_ref_hz: 3e6,
            gamma_excess_hz: 5e6,
        }
    }
}

impl ExcessNoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.excess_db_at_ref >= 0.0 && self.excess_db_at_ref.is_finite()) {
            return Err(Error::invalid("excess_noise.excess_db_at_ref", "must be >= 0"));
        }
        if !(self.f_ref_hz > 0.0 && self.f_ref_hz.is_finite()) {
            return Err(Error::invalid("excess_noise.f_ref_hz", "must be positive"));
        }
        if !(self.gamma_excess_hz > 0.0 && self.gamma_excess_hz.is_finite()) {
            return Err(Error::invalid("excess_noise.gamma_excess_hz", "must be positive"));
        }
        Ok(())
    }
}

/// Spectrum-analyzer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerConfig {
    pub rbw_hz: f64,
    pub vbw_hz: f64,
    pub sweep_s: f64,
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub n_avg: usize,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            rbw_hz: 100e3,
            vbw_hz: 100.0,
            sweep_s: 2.0,
            f_start_hz: 0.2e6,
            f_stop_hz: 20e6,
            n_avg: 100,
        }
    }
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rbw_hz > 0.0 && self.rbw_hz.is_finite()) {
            return Err(Error::invalid("analyzer.rbw_hz", "must be positive"));
        }
        if !(self.vbw_hz > 0.0 && self.vbw_hz <= self.rbw_hz) {
            return Err(Error::invalid("analyzer.vbw_hz", "must satisfy 0 < vbw_hz <= rbw_hz"));
        }
        if !(self.f_start_hz >= 0.0 && self.f_start_hz < self.f_stop_hz) {
            return Err(Error::invalid("analyzer.f_start_hz", "must satisfy 0 <= f_start_hz < f_stop_hz"));
        }
        if !(self.sweep_s > 0.0 && self.sweep_s.is_finite()) {
            return Err(Error::invalid("analyzer.sweep_s", "must be positive"));
        }
        if self.n_avg < 1 {
            return Err(Error::invalid("analyzer.n_avg", "must be >= 1"));
        }
        Ok(())
    }
}

/// The complete parameter set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpoConfig {
    pub cavity: CavityParams,
    pub pump: PumpParams,
    pub crystal: CrystalTuning,
    pub detection: DetectionParams,
    pub excess_noise: ExcessNoiseModel,
    pub analyzer: AnalyzerConfig,
    pub sim: SimConfig,
}

impl OpoConfig {
    /// Parses and validates config text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<string>"))
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: OpoConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        self.pump.validate()?;
        self.crystal.validate()?;
        self.detection.validate()?;
        self.excess_noise.validate()?;
        self.analyzer.validate()?;
        self.sim.validate(&self.analyzer)?;
        Ok(())
    }

    /// Serializes the resolved config in the same format it is read from.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialization is infallible")
    }
}

/// Reads, fills defaults for and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<OpoConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    OpoConfig::parse(&text, path)
}
