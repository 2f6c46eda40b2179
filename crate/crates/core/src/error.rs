use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} ({left:?} vs {right:?})")]
    DimensionMismatch { what: &'static str, left: (usize, usize), right: (usize, usize) },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Scene(#[from] SceneError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

/// Failures while reading or validating a scene directory.
#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}: cannot read: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed at byte {offset}: {msg}")]
    Malformed { path: PathBuf, offset: usize, msg: String },

    #[error("{path}: field `{field}`: {msg}")]
    Field { path: PathBuf, field: String, msg: String },

    #[error("{path}: validation failed: {msg}")]
    Validation { path: PathBuf, msg: String },
}

impl SceneError {
    pub fn path(&self) -> &std::path::Path {
        match self {
            SceneError::Io { path, .. }
            | SceneError::Malformed { path, .. }
            | SceneError::Field { path, .. }
            | SceneError::Validation { path, .. } => path,
        }
    }
}
