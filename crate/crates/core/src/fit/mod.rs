//! Least-squares estimation of threshold, slope efficiency, escape
//! efficiency and cavity bandwidth.

mod lm;
mod power;
mod squeezing;

pub use power::fit_power_curve;
pub use squeezing::{fit_squeezing_spectrum, infer_loss, SqueezingFitOptions};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimates with their standard errors, keyed by parameter name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BTreeMap<String, f64>,
    pub std_errors: BTreeMap<String, f64>,
    pub residual_norm: f64,
    pub n_iter: usize,
    pub converged: bool,
}

impl FitResult {
    fn from_outcome(names: &[&str], out: lm::LmOutcome) -> Self {
        let zip = |v: &[f64]| names.iter().map(|n| n.to_string()).zip(v.iter().copied()).collect();
        Self {
            params: zip(&out.params),
            std_errors: zip(&out.std_errors),
            residual_norm: out.residual_norm,
            n_iter: out.n_iter,
            converged: out.converged,
        }
    }

    /// The named estimate.
    ///
    /// # Panics
    /// If the fit has no parameter called `name`.
    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn std_error(&self, name: &str) -> f64 {
        self.std_errors[name]
    }

    /// `Ok` when converged, otherwise the non-convergence error.
    pub fn require_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged { n_iter: self.n_iter })
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }
}
