use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to parse config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sample rate {sample_rate_hz} Hz does not satisfy Nyquist for f_stop = {f_stop_hz} Hz (need sample_rate_hz > 2 * f_stop_hz)")]
    Nyquist { sample_rate_hz: f64, f_stop_hz: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("spectrum grids differ: {0}")]
    GridMismatch(String),

    #[error("shot-noise spectrum is not positive at bin {bin} ({f_hz} Hz)")]
    NonPositiveShot { bin: usize, f_hz: f64 },

    #[error("electrical noise is not below the data at bin {bin} ({f_hz} Hz)")]
    ElectricalExceedsData { bin: usize, f_hz: f64 },

    #[error("spectrum must be {0} before this operation")]
    PipelineStage(&'static str),

    #[error("insufficient data for fit: {0}")]
    InsufficientData(String),

    #[error("fit did not converge after {n_iter} iterations")]
    NotConverged { n_iter: usize },

    #[error("no shot-calibration trace at {0}; run `twinbeam simulate --calibrate` to record one")]
    MissingCalibration(PathBuf),

    #[error("trace format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
