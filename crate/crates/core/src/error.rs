use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("resource error: {0}")]
    Resource(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("sampler exhausted: produced {produced} of {requested} admissible shapes after {draws} draws")]
    Exhausted {
        requested: usize,
        produced: usize,
        draws: usize,
    },

    #[error("gathering failed: {skipped} of {total} records skipped")]
    Gather { skipped: usize, total: usize },

    #[error("data quality abort: {0}")]
    DataQuality(String),

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("bundle corrupted: {0}")]
    Corrupt(String),

    #[error("unsupported bundle format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    User,
    Environment,
    DataQuality,
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Resource(_) | Error::Io { .. } | Error::Gather { .. } => ErrorClass::Environment,
            Error::DataQuality(_) => ErrorClass::DataQuality,
            _ => ErrorClass::User,
        }
    }
}
