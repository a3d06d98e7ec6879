use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "identification strip is empty: no observations within h = {h} of the cutoff {cutoff}"
    )]
    StripEmpty { h: f64, cutoff: f64 },

    #[error(
        "identification strip too sparse for h = {h}, n_omin = {n_omin}: \
         {left} observations left of the cutoff and {right} right of it"
    )]
    RootCondition {
        h: f64,
        n_omin: usize,
        left: usize,
        right: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient draws: need at least {needed}, got {got}")]
    InsufficientDraws { needed: usize, got: usize },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
