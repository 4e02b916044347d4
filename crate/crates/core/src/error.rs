use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke a documented precondition (shape, ordering, bounds).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("nothing to denoise: every band has zero noise")]
    NothingToDenoise,

    #[error("image too small: {0}")]
    TooSmall(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("size mismatch: header declares {expected} bytes of payload, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("band count {bands} not supported by {format}")]
    BandMismatch { format: &'static str, bands: usize },

    #[error("png: {0}")]
    Png(String),

    /// A pixel received no patch contribution during aggregation.
    #[error("internal error: pixel ({row}, {col}) not covered by any patch")]
    Uncovered { row: usize, col: usize },

    #[error("i/o error on {path}: {source}")]
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
