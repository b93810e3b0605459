use std::path::PathBuf;

use thiserror::Error;

use crate::tokenizer::TokenId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("stream has {available} characters, need {required} (train {train} + test {test})")]
    InsufficientData {
        required: usize,
        available: usize,
        train: usize,
        test: usize,
    },

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: TokenId, vocab_size: usize },

    #[error("token id {id} at position {position} does not fit in {width} bits")]
    IdOverflow {
        id: TokenId,
        position: usize,
        width: u32,
    },

    #[error("unknown tokenizer family `{0}`")]
    UnknownFamily(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("vocabulary size {requested} too small: need at least {minimum}")]
    VocabTooSmall { requested: usize, minimum: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("undefined: {0}")]
    Undefined(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{algorithm} compression failed: {source}")]
    Compression {
        algorithm: &'static str,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
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
