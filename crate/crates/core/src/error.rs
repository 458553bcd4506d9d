use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("operands live over different radical bases")]
    BasisMismatch,
    #[error("product of basis elements sqrt({0}) and sqrt({1}) does not reduce into the basis")]
    NotProductClosed(u64, u64),
    #[error("radicand {0} is not squarefree")]
    NotSquarefree(u64),
    #[error("radicand {0} is not in the basis")]
    RadicandNotInBasis(u64),
    #[error("radical basis too large: {0} elements (limit {1})")]
    BasisTooLarge(usize, usize),
    #[error("enclosure precision cap of {0} bits exceeded")]
    PrecisionExhausted(u32),
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("observable does not fit the system: {0}")]
    UnsupportedObservable(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("scheme is incompatible with the request: {0}")]
    SchemeIncompatible(String),
    #[error("resource limit exceeded: {0}")]
    LimitExceeded(String),
    #[error("empty set")]
    EmptySet,
    #[error("invalid descriptor: {0}")]
    Descriptor(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn syntax(position: usize, message: impl Into<String>) -> Self {
        Error::Syntax {
            position,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
