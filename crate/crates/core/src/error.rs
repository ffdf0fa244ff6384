use thiserror::Error;

/// Errors raised by the geometry, integration and certification layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported query: {0}")]
    Unsupported(&'static str),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("quadrature resolution too coarse: estimated error {estimate:e} above {requested:e} at grid {grid}")]
    Resolution { estimate: f64, requested: f64, grid: usize },

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("conjugate point at t = {t}")]
    ConjugatePoint { t: f64 },

    #[error("numerical inconsistency in {what}: residual {residual:e}")]
    NumericalInconsistency { what: &'static str, residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("query t = {t} outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("certification failure: {0}")]
    CertificationFailure(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
