use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid survival curve: {0}")]
    InvalidCurve(String),

    #[error("time {t} lies outside the curve horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },

    #[error("invalid initial law: {0}")]
    InvalidLaw(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
