use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented invariant.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("time {t} outside [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("rate {r} outside grid [{lo}, {hi}]")]
    RateOutOfRange { r: f64, lo: f64, hi: f64 },

    /// sigma_bar^2 fell below the configured ellipticity floor.
    #[error("degenerate diffusion: sigma_bar^2 = {value:e} < floor {floor:e} at r = {r}")]
    Degenerate { r: f64, value: f64, floor: f64 },

    /// A solver produced a value with the wrong sign or a non-finite value.
    #[error("numerical failure in {stage}: {detail}")]
    Numerical { stage: &'static str, detail: String },

    #[error("measure mismatch: expected {expected}, bundle was simulated under {found}")]
    MeasureMismatch { expected: String, found: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
