use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: String, index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("numerical divergence in {context} at {at}: {detail}")]
    Divergence {
        context: String,
        at: String,
        detail: String,
    },

    #[error("{path}: bad magic, expected {expected:?}, found {found:?}")]
    Magic {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },

    #[error("{path}: header declares {declared} records but file holds {found}")]
    CountMismatch {
        path: PathBuf,
        declared: usize,
        found: usize,
    },

    #[error("{path}:{line}: field `{field}` has length {found}, expected {expected}")]
    RecordDimension {
        path: PathBuf,
        line: usize,
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: malformed record: {detail}")]
    Malformed {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },

    #[error("training step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            found,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn divergence(
        context: impl Into<String>,
        at: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        Error::Divergence {
            context: context.into(),
            at: at.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code for the command-line front end: 3 for data and
    /// format problems, 4 for numerical divergence, 2 for bad arguments.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AtStep { source, .. } => source.exit_code(),
            Error::Divergence { .. } | Error::NonFinite { .. } => 4,
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Rejects the first non-finite entry of `values`.
pub(crate) fn ensure_finite(context: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            context: context.to_string(),
            index,
        }),
        None => Ok(()),
    }
}
