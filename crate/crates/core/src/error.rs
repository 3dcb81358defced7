use thiserror::Error;

use crate::data::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset failed validation ({} violation(s)); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Validation(Vec<Violation>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown subject `{0}`")]
    UnknownSubject(String),

    #[error("interval index {index} out of range 1..={max}")]
    IntervalOutOfRange { index: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance matrix is indefinite (min eigenvalue {min_eig:e}, max {max_eig:e})")]
    IndefiniteCovariance { min_eig: f64, max_eig: f64 },

    #[error("insufficient rows: n = {n}, p = {p}")]
    InsufficientRows { n: usize, p: usize },

    #[error("all design columns are aliased")]
    AllAliased,

    #[error("no events in fitting sample")]
    ZeroEvents,

    #[error("all counts are zero")]
    AllCountsZero,

    #[error("{0} did not converge")]
    NonConvergence(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("history for subject `{subject}` needs a missing value: {what}")]
    MissingHistory { subject: String, what: String },

    #[error("interval {interval}, variable `{variable}`: {source}")]
    Fit {
        interval: usize,
        variable: String,
        #[source]
        source: Box<Error>,
    },

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{file}:{line}: column `{column}`: {message}")]
    Parse {
        file: String,
        line: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the data or model numerics rather than
    /// malformed input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::IndefiniteCovariance { .. }
            | Error::InsufficientRows { .. }
            | Error::AllAliased
            | Error::ZeroEvents
            | Error::AllCountsZero
            | Error::NonConvergence(_)
            | Error::NonFinite(_) => true,
            Error::Fit { source, .. } | Error::Replicate { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) | Error::Parse { .. } => true,
            Error::Replicate { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
