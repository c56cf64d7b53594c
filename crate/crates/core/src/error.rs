use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("rank-deficient trend matrix ({block} block)")]
    SingularTrend { block: String },

    #[error("ill-conditioned problem: {0}")]
    IllConditioned(String),

    #[error("hyperparameter fit failed: {0}")]
    FitFailed(String),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("joint oracle too large: stacked size {size} exceeds cap {cap}")]
    OracleTooLarge { size: usize, cap: usize },

    #[error("design point {0:?} is already in the level-1 design")]
    DuplicateDesignPoint(Vec<f64>),

    #[error("simulator failed at level {level}: {message}")]
    Simulator { level: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by numerical trouble rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularTrend { .. }
                | Error::IllConditioned(_)
                | Error::FitFailed(_)
                | Error::InternalConsistency(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
