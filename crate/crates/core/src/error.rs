use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants map onto the failure categories surfaced by the CLI exit codes:
/// configuration problems are detected before any work starts, argument
/// errors are contract violations on operation inputs, and interface errors
/// model the victim machine rejecting malformed input.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid machine/phantom/experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Invalid argument to an operation.
    #[error("argument error: {0}")]
    Argument(String),
    /// Input rejected at the black-box input-output interface.
    #[error("interface error: {0}")]
    Interface(String),
    /// File format violation while decoding an artifact.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    /// I/O failure with path context.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn interface(msg: impl Into<String>) -> Self {
        Error::Interface(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Machine-parsable category name, one per variant.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Argument(_) => "argument",
            Error::Interface(_) => "interface",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code for the CLI: stable per category, nonzero on failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Argument(_) => 3,
            Error::Interface(_) => 4,
            Error::Format { .. } => 5,
            Error::Io { .. } => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
