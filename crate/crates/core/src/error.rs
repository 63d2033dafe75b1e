use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the echomark library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),

    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("unsupported audio format in {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("{path} contains no audio samples")]
    EmptyAudio { path: PathBuf },

    #[error("clip too short: {detail}")]
    ClipTooShort { detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),

    #[error("payload of {bits} bits exceeds capacity of {capacity} bits")]
    CapacityExceeded { bits: usize, capacity: usize },

    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
