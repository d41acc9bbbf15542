use std::path::PathBuf;

/// Errors produced by the toolkit.
///
/// The variants follow the failure classes the CLI maps onto exit codes:
/// usage and configuration problems exit with 2, data and I/O problems with 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the domain of the operation (index out of range,
    /// mismatched dimensions, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// An operation was invoked with an inconsistent combination of inputs.
    #[error("usage error: {0}")]
    Usage(String),
    /// A configuration value is invalid or references are inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input data is malformed or inconsistent with the model.
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged at step {step}: non-finite loss {loss}")]
    Training { step: usize, loss: f64 },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Usage(_) | Error::Config(_) => 2,
            Error::Data(_) | Error::Training { .. } | Error::Io { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
