use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid channel model: {0}")]
    InvalidModel(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("unknown override key `{key}`; valid keys: {valid}")]
    UnknownOverride { key: String, valid: String },

    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
