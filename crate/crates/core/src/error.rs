use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input failed a precondition; the message names the offending field.
    InvalidInput(String),
    /// A value that must be finite was NaN or infinite.
    NonFinite(&'static str),
    /// Two parallel inputs had different lengths.
    LengthMismatch { expected: usize, found: usize },
    /// The normal equations could not be factorized.
    Singular(String),
    /// Both treatment arms are required but one is missing.
    ArmMissing(u8),
    /// A conditional on a zero-probability event was requested.
    UndefinedConditional(String),
    /// An exact enumeration identity did not hold to tolerance.
    IdentityViolation { what: &'static str, gap: f64 },
    /// Training diverged even after step-size reductions.
    Diverged(String),
    /// Failure inside one stage of the estimation pipeline.
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::NonFinite(field) => write!(f, "non-finite value in `{field}`"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::Singular(msg) => write!(f, "singular system: {msg}"),
            Error::ArmMissing(arm) => write!(f, "treatment arm {arm} has no records"),
            Error::UndefinedConditional(msg) => write!(f, "undefined conditional: {msg}"),
            Error::IdentityViolation { what, gap } => {
                write!(f, "{what} identity violated by {gap:e}")
            }
            Error::Diverged(msg) => write!(f, "training diverged: {msg}"),
            Error::Stage { stage, source } => write!(f, "{stage}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Stage { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
