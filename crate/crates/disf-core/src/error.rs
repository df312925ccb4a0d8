use std::path::PathBuf;

/// Errors produced by corpus I/O, statistics, and selection routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Data failed an internal consistency check (NaN entries, duplicate
    /// ids, asymmetry, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    /// The file does not look like a supported embedding format.
    #[error("bad format: {0}")]
    Format(String),

    /// The file ended before the payload promised by its header.
    #[error("truncated file: {0}")]
    Truncated(String),

    /// The id sidecar does not line up with the feature payload.
    #[error("id mismatch: {0}")]
    IdMismatch(String),

    /// A brute-force enumeration was refused because it would be too large.
    #[error("refusing enumeration: {0}")]
    EnumerationGuard(String),

    /// An underlying I/O failure, annotated with the path involved.
    #[error("{}: {source}", path.display())]
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

pub type Result<T> = std::result::Result<T, Error>;
