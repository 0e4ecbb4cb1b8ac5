use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A dataset violates one of its structural invariants.
    InvalidDataset(String),
    /// An argument is outside the operation's domain.
    InvalidArgument(String),
    /// Vector length does not match what the model or operation expects.
    DimensionMismatch { expected: usize, found: usize },
    /// A class has too few instances to be placed on both sides of a partition.
    TooFewInstances { class: usize, count: usize, needed: usize },
    /// A statistic is undefined for the supplied data (zero variance, single label, ...).
    Degenerate(String),
    /// Prediction sets that should describe the same instances do not.
    Alignment(String),
    /// A learner's parameters failed validation.
    InvalidParams(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidDataset(msg) => write!(f, "invalid dataset: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::TooFewInstances { class, count, needed } => write!(
                f,
                "class {class} has {count} instance(s), at least {needed} needed"
            ),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::Alignment(msg) => write!(f, "misaligned prediction sets: {msg}"),
            Error::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
