use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A network configuration that does not describe a valid layer chain.
    #[error("layer {layer}: {message}")]
    Config { layer: usize, message: String },

    /// Malformed architecture file.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Wrong magic number or otherwise unrecognizable container.
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Payload shorter than its header promises.
    #[error("{path}: expected {expected} payload bytes, found {found}")]
    Length {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    /// Well-formed container holding invalid values.
    #[error("{0}")]
    Data(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
