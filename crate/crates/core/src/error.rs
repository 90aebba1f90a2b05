use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("parameter `{name}` has shape {expected:?} in the model but {found:?} in the checkpoint")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("index error: {0}")]
    Index(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: parse error at line {line}, column {column}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            msg: err.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
