use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error: {0}")]
    RawIo(#[from] std::io::Error),

    #[error("malformed input in {context}: {message}")]
    Format { context: String, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("word id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },

    #[error("co-occurrence value {value} at ({i}, {j}) is not positive")]
    NonPositiveEntry { i: u32, j: u32, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite parameter at epoch {epoch} (learning rate {learning_rate} too high?)")]
    Diverged { epoch: usize, learning_rate: f64 },

    #[error("zero-norm vector has no cosine similarity")]
    ZeroNorm,

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("linear system is singular (pivot {pivot:e} at column {column}); use a positive ridge")]
    Singular { column: usize, pivot: f64 },

    #[error("document {0} is unknown")]
    UnknownDocument(usize),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
