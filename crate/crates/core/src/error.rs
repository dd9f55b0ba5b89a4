use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A record could not be parsed. `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn at_frame(self, frame: u64) -> Self {
        match self {
            e @ Error::AtFrame { .. } => e,
            e => Error::AtFrame {
                frame,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, with frame context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtFrame { source, .. } => source.root(),
            e => e,
        }
    }
}
