use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {x} outside domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("schedule violation: {0}")]
    Schedule(String),

    #[error("expansions use different kernels")]
    KernelMismatch,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Short machine-parsable category, used as the CLI error prefix.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::Parameter(_) => "parameter",
            Error::Schedule(_) => "schedule",
            Error::KernelMismatch => "kernel-mismatch",
            Error::Numerical(_) => "numerical",
            Error::Contract(_) => "contract",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
