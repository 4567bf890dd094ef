use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the coverage-mapping pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{param}` out of range: {value} (valid: {valid})")]
    Range {
        param: &'static str,
        value: f64,
        valid: &'static str,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("no covariate value for weighted bts {0}")]
    MissingCovariate(crate::BtsId),

    #[error("assignment mismatch: {0}")]
    Mismatch(String),

    #[error("round {round} (seed {seed}) failed: {source}")]
    Round {
        round: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
