use std::path::PathBuf;

use thiserror::Error;

use crate::kernel::KernelParams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable `{name}`: value {value} outside [{lower}, {upper}]")]
    Range {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Fit(#[from] FitError),

    #[error(transparent)]
    Simulator(#[from] SimulatorError),

    #[error("state error: {0}")]
    State(String),

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
}

#[derive(Debug, Error)]
pub enum FitError {
    /// No restart reached a stationary point; carries the best parameters seen.
    #[error("hyperparameter optimisation did not converge (best log posterior {log_posterior:.6})")]
    NotConverged {
        best: KernelParams,
        log_posterior: f64,
    },

    #[error("kernel matrix not positive definite even with jitter {jitter:e}")]
    Singular { jitter: f64 },

    #[error("invalid training data: {0}")]
    Data(String),
}

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("timed out after {secs} s waiting for {path}")]
    Timeout { path: PathBuf, secs: u64 },

    #[error("exchange directory {0} is locked by another batch")]
    Busy(PathBuf),

    #[error("malformed results: {}", .0.join("; "))]
    Malformed(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Other(String),
}

/// Failure of a single simulation job, as opposed to the whole batch.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum JobError {
    #[error("no result row for job (id={id}, rep={rep})")]
    MissingResult { id: usize, rep: usize },

    #[error("job (id={id}, rep={rep}): {reason}")]
    BadRow { id: usize, rep: usize, reason: String },

    #[error("job (id={id}, rep={rep}) failed: {reason}")]
    Failed { id: usize, rep: usize, reason: String },
}
