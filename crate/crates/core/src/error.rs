use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the recovery library and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precision matrix is not positive definite (tried jitter levels {attempted:?})")]
    Conditioning { attempted: Vec<f64> },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("signal generation failed: {0}")]
    Generation(String),

    #[error("invalid config{}: {message}", location.as_deref().map(|l| format!(" ({l})")).unwrap_or_default())]
    Config {
        message: String,
        location: Option<String>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config {
            message: msg.into(),
            location: None,
        }
    }

    pub(crate) fn config_at(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            message: msg.into(),
            location: Some(format!("field `{}`", field.into())),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::Dimension {
                context,
                expected,
                actual,
            })
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
