//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The inputs are formally valid but outside the regime in which the
    /// requested formula or bound is defined.
    #[error("regime violation: {0}")]
    RegimeViolation(String),

    /// A quadrature or root-finding routine failed to converge.
    #[error("numeric failure: {what} (residual {residual:e})")]
    NumericFailure { what: String, residual: f64 },

    /// A density specification cannot be normalized.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// File or format errors on the text interchange formats.
    #[error("format error in {path}: {what}")]
    Format { path: String, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn regime(msg: impl Into<String>) -> Self {
        Error::RegimeViolation(msg.into())
    }
}
