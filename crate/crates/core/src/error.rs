use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("insufficient scenes: {0}")]
    InsufficientScenes(String),

    #[error("field of view out of bounds: {0}")]
    Bounds(String),

    #[error("no feasible saccade at position ({x}, {y}) in a {width}x{height} scene")]
    ImpossibleGeometry {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("corrupt event: {0}")]
    CorruptEvent(String),

    #[error("block (a={a}, b={b}, q={q}) has no observations")]
    UnobservedBlock { a: u8, b: u8, q: u8 },

    #[error("malformed {kind} file {path}: {message}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error("integrity check failed: {0}")]
    Integrity(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        kind: &'static str,
        path: impl Into<PathBuf>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            kind,
            path: path.into(),
            message: message.into(),
        }
    }
}
