use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the depth pipeline.
#[derive(Debug)]
pub enum Error {
    /// Tensor shapes do not satisfy an operation's contract.
    ShapeMismatch { expected: String, got: String, context: &'static str },
    /// A scalar argument violates a precondition (range, sign, divisibility).
    InvalidArgument(String),
    /// A computation produced or received degenerate data (empty mask,
    /// non-positive median, constant map where variation is required).
    Degenerate(String),
    /// A serialized artifact (AVST tensor, WAV, PNG, config, manifest) is
    /// malformed.
    Format(String),
    Io(std::io::Error),
    /// An operation received non-finite values; surfaced by trainers as
    /// divergence.
    NonFinite(&'static str),
    /// Training aborted because the loss became non-finite.
    Diverged { step: usize, trace: Vec<f64> },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { expected, got, context } => {
                write!(f, "{context}: expected shape {expected}, got {got}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::NonFinite(context) => write!(f, "non-finite values in {context}"),
            Error::Diverged { step, .. } => {
                write!(f, "training diverged (non-finite loss) at step {step}")
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub(crate) fn shape_err(context: &'static str, expected: impl fmt::Debug, got: impl fmt::Debug) -> Error {
    Error::ShapeMismatch {
        expected: format!("{expected:?}"),
        got: format!("{got:?}"),
        context,
    }
}
