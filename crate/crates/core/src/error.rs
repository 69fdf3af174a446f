use std::fmt;
use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the engine.
///
/// Variants are grouped so that a caller (the CLI in particular) can map
/// them onto a small set of exit codes via [`Error::kind`].
#[derive(Debug)]
pub enum Error {
    /// Underlying I/O failure, with the path involved when known.
    Io { path: Option<PathBuf>, source: io::Error },
    /// A file does not follow the expected format (bad magic, bad header).
    Format(String),
    /// A file is structurally valid but its payload is damaged or truncated.
    Corrupt(String),
    /// Input decodes but uses a variant the engine does not support.
    Unsupported(String),
    /// Arguments violate an operation's preconditions.
    InvalidInput(String),
    /// Dataset-level validation failed (duplicate ids, unknown class ids, ...).
    Validation(String),
    /// A data invariant does not hold (unnormalized probabilities, ...).
    Invariant(String),
    /// A statistic is undefined for the given data.
    Undefined { code: &'static str, message: String },
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    InvalidInput,
    Invariant,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: Some(path.into()), source }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Format(_)
            | Error::Corrupt(_)
            | Error::Unsupported(_)
            | Error::InvalidInput(_)
            | Error::Validation(_) => ErrorKind::InvalidInput,
            Error::Invariant(_) | Error::Undefined { .. } => ErrorKind::Invariant,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path: Some(p), source } => write!(f, "i/o error on {}: {}", p.display(), source),
            Error::Io { path: None, source } => write!(f, "i/o error: {}", source),
            Error::Format(m) => write!(f, "format error: {}", m),
            Error::Corrupt(m) => write!(f, "corrupt data: {}", m),
            Error::Unsupported(m) => write!(f, "unsupported format: {}", m),
            Error::InvalidInput(m) => write!(f, "invalid input: {}", m),
            Error::Validation(m) => write!(f, "validation error: {}", m),
            Error::Invariant(m) => write!(f, "invariant violation: {}", m),
            Error::Undefined { code, message } => write!(f, "undefined statistic [{}]: {}", code, message),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(source: io::Error) -> Self {
        Error::Io { path: None, source }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io { path: None, source: e.into() }
        } else {
            Error::Format(format!("json: {}", e))
        }
    }
}
