use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample is empty")]
    EmptySample,

    #[error("null CDF value {value} at observation {index} lies outside [0, 1]")]
    CdfOutOfRange { index: usize, value: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sample too small: n = {n}, need at least {min}")]
    SampleTooSmall { n: usize, min: usize },

    #[error("level {ell} is not part of the grid (valid levels 2..={ell_max})")]
    InvalidLevel { ell: u32, ell_max: u32 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported statistic: {0}")]
    UnsupportedStat(String),

    #[error("table version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("corrupt table: {0}")]
    CorruptTable(String),

    #[error("no critical-value table for {0}")]
    MissingTable(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
