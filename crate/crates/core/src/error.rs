use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its mathematical domain.
    #[error("parameter domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    /// A statistic equals 0 or 1 exactly, so its probit score is infinite.
    #[error("statistic at index {index} is on the boundary of (0,1): {value}")]
    Boundary { index: usize, value: f64 },

    #[error("unsupported request: {0}")]
    Unsupported(String),

    /// Too many Monte Carlo draws had to be discarded.
    #[error("{excluded} of {total} draws excluded (limit {limit})")]
    TooManyExcluded {
        excluded: usize,
        total: usize,
        limit: usize,
    },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    /// Failure at one point of a sweep.
    #[error("at sweep value {value}: {source}")]
    SweepPoint {
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical pipeline, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SweepPoint { source, .. } => source.is_numerical(),
            other => matches!(
                other,
                Error::NotPositiveDefinite(_)
                    | Error::Boundary { .. }
                    | Error::TooManyExcluded { .. }
            ),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
