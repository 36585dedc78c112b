use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("channel calibration failed: {0}")]
    Calibration(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("non-finite value at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("instance too large for exhaustive enumeration: {variables} binary variables (limit {limit})")]
    TooLarge { variables: usize, limit: usize },

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status: 2 config, 3 numerical divergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension { .. }
            | Error::Parameter(_)
            | Error::Config { .. }
            | Error::TooLarge { .. } => 2,
            Error::Divergence { .. } | Error::Calibration(_) => 3,
            Error::Format { .. } | Error::Io { .. } | Error::Json(_) | Error::Csv(_) => 4,
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            actual,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::dim(what, expected, actual))
    }
}
