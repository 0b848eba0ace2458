use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{source_name}:{line}: {message}")]
    Format {
        source_name: String,
        line: u64,
        message: String,
    },

    /// Input data parsed but breaks an invariant (gaps, duplicates with
    /// conflicting values, misaligned timestamps).
    #[error("invalid data: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data does not cover what was asked of it (missing snapshot,
    /// missing settlement prices, no overlap between series).
    #[error("data coverage: {0}")]
    Coverage(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn coverage(msg: impl Into<String>) -> Self {
        Error::Coverage(msg.into())
    }

    pub fn format(source_name: impl Into<String>, line: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            source_name: source_name.into(),
            line,
            message: msg.into(),
        }
    }

    /// Prefixes the message with `ctx`, keeping the variant and exit code.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Argument(m) => Error::Argument(format!("{ctx}: {m}")),
            Error::Format {
                source_name,
                line,
                message,
            } => Error::Format {
                source_name,
                line,
                message: format!("{ctx}: {message}"),
            },
            Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Coverage(m) => Error::Coverage(format!("{ctx}: {m}")),
            Error::Io(e) => Error::Io(io::Error::new(e.kind(), format!("{ctx}: {e}"))),
            Error::Internal(m) => Error::Internal(format!("{ctx}: {m}")),
        }
    }

    /// Process exit code for this error: 1 I/O, 2 config/format, 3 data coverage.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Internal(_) => 1,
            Error::Argument(_) | Error::Format { .. } | Error::Validation(_) | Error::Config(_) => {
                2
            }
            Error::Coverage(_) => 3,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::Io(e),
            other => Error::format("csv", line, format!("{other:?}")),
        }
    }
}

impl From<zip::result::ZipError> for Error {
    fn from(err: zip::result::ZipError) -> Self {
        match err {
            zip::result::ZipError::Io(e) => Error::Io(e),
            other => Error::format("zip", 0, other.to_string()),
        }
    }
}
