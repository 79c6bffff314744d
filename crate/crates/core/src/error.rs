//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {file} line {line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("xml error in {file}: {message}")]
    Xml { file: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("projection domain error: {0}")]
    ProjectionDomain(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("curve fit error: {0}")]
    Fit(String),

    #[error("segment failure: {0}")]
    SegmentFailure(String),

    #[error("graph consistency error: {0}")]
    GraphConsistency(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("scene spec error in field `{field}`: {message}")]
    SceneSpec { field: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(file: impl Into<String>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
