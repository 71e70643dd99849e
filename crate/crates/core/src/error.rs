use thiserror::Error;

/// Errors produced by the spectral, testing and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("power series has a zero constant term and cannot be inverted")]
    SingularSeries,

    #[error("numerical failure: {message} (last residual {residual:e})")]
    NumericalFailure { message: String, residual: f64 },

    #[error("moment matrix is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("moments are infeasible for a discrete measure: {0}")]
    InfeasibleMoments(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, residual: f64) -> Self {
        Error::NumericalFailure {
            message: msg.into(),
            residual,
        }
    }
}
