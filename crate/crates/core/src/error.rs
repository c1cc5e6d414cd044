use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Model parameters violate the family's constraint set.
    #[error("invalid parameters for {model}: {reason}")]
    InvalidParameters { model: String, reason: String },

    /// Input data is structurally invalid.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Interior knots collapsed onto each other.
    #[error("duplicate interior knots at {knot} with {requested} interior knots requested; use fewer knots")]
    DuplicateKnots { knot: f64, requested: usize },

    /// The fleet carries no events, so no MLE exists.
    #[error("fleet has no events; the MLE does not exist")]
    NoEvents,

    /// A fit could not be produced.
    #[error("fit failed: {0}")]
    FitFailed(String),

    /// Confidence band construction failed.
    #[error("band error: {0}")]
    Band(String),

    /// Bootstrap or simulation aborted after too many failures.
    #[error("aborted: {0}")]
    Aborted(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
