use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters or inconsistent arguments.
    Input,
    /// Unreadable, malformed, or insufficient data.
    Data,
    /// A numerical procedure failed (singular system, non-finite values).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("duplicate station id '{0}'")]
    DuplicateStation(String),

    #[error("line {line}: station id '{id}' is not in the station table")]
    UnknownStation { id: String, line: u64 },

    #[error("line {line}: duplicate observation for station '{id}' on {date}")]
    DuplicateObservation { id: String, date: String, line: u64 },

    #[error("no complete cases: {0}")]
    NoCompleteCases(String),

    #[error("projection singularity at latitude {lat} degrees")]
    ProjectionSingularity { lat: f64 },

    #[error("point ({lon}, {lat}) lies outside the climate grid")]
    OutsideGrid { lon: f64, lat: f64 },

    #[error("normal unavailable at ({lon}, {lat}) for month {month}: adjacent nodata cell")]
    NormalUnavailable { lon: f64, lat: f64, month: u32 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient design; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("collinear points: {0}")]
    Collinear(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("improper predictive distribution: {0}")]
    ImproperPredictive(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInput(_) | Error::DimensionMismatch(_) => ErrorKind::Input,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::DuplicateStation(_)
            | Error::UnknownStation { .. }
            | Error::DuplicateObservation { .. }
            | Error::NoCompleteCases(_)
            | Error::ProjectionSingularity { .. }
            | Error::OutsideGrid { .. }
            | Error::NormalUnavailable { .. }
            | Error::InsufficientData(_) => ErrorKind::Data,
            Error::RankDeficient { .. }
            | Error::Singular(_)
            | Error::NotPositiveDefinite(_)
            | Error::Collinear(_)
            | Error::NonFinite(_)
            | Error::ImproperPredictive(_) => ErrorKind::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
