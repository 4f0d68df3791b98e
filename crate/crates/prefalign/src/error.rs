//! Crate-wide error type.
//!
//! Errors fall into three categories that the CLI maps onto its exit-code
//! taxonomy: validation (2), I/O (3), provider (4).

use std::path::PathBuf;

use crate::providers::ProviderError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad inputs, bad configuration, schema violations, contract breaches.
    #[error("{0}")]
    Validation(String),

    /// Filesystem failures, always naming the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A remote (or mock) capability failed; carries kind, model and attempts.
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable exit code for the CLI: 2 validation, 3 I/O, 4 provider.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            Error::Io { .. } => 3,
            Error::Provider(_) => 4,
        }
    }
}
