use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or lengths handed to an operation do not agree.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A caller-supplied parameter is outside its legal range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An iterative method produced a non-finite value.
    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical {
        iteration: usize,
        message: String,
        trace: Vec<f64>,
    },

    #[error("malformed input {}{}: {message}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(), line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Parse {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
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

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line: None,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a file path to a parse error that was raised without one.
    pub fn at_path(self, p: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse {
                path: None,
                line,
                message,
            } => Error::Parse {
                path: Some(p.into()),
                line,
                message,
            },
            other => other,
        }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) | Error::Parameter(_) => 2,
            Error::Numerical { .. } => 3,
            Error::Io { .. } | Error::Parse { .. } => 4,
        }
    }
}
