use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("measurement vector must be nonzero and finite")]
    InvalidMeasurement,

    #[error("degenerate measurement noise: denominator {0:e}")]
    DegenerateNoise(f64),

    #[error("trajectory diverged at t = {t} after {steps} integration steps")]
    Diverged { t: f64, steps: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("expected a unit vector, norm is {0}")]
    NotUnitNorm(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
