use std::path::PathBuf;

use crate::methods::IterateState;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String, last_state: Box<IterateState> },

    #[error("continuous run diverged at t = {time}")]
    ContinuousDivergence { time: f64 },

    #[error("iterate left the domain box at iteration {iteration}: {point:?}")]
    OutOfDomain { iteration: usize, point: Vec<f64> },

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// True for errors that come from a run blowing up rather than from bad input.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::ContinuousDivergence { .. } | Error::OutOfDomain { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
