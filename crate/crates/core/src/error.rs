use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the analysis chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("truncated IQ record: {bytes} bytes is not a multiple of 8")]
    TruncatedRecord { bytes: u64 },

    #[error("malformed metadata: {0}")]
    Metadata(String),

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient samples: need at least {required}, got {available}")]
    InsufficientSamples { required: usize, available: usize },

    #[error("frequency axes do not match")]
    AxisMismatch,

    #[error("unknown profile `{0}`")]
    UnknownProfile(String),

    #[error("{what} at {freq_hz} Hz lies outside the captured band [{lo_hz}, {hi_hz})")]
    OutOfBand {
        what: &'static str,
        freq_hz: f64,
        lo_hz: f64,
        hi_hz: f64,
    },

    #[error("recordings cannot be mixed: {0}")]
    MixMismatch(String),

    #[error("bench: {0}")]
    Bench(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
