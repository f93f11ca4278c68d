use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report. Variants map one-to-one onto the
/// error classes surfaced by the CLI and the C ABI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("level error: {0}")]
    Level(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("{path}:{line}: {message}")]
    Ingestion {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !($cond) {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
