//! Crate-wide error type.

/// Errors shared by all modules.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Input outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An adaptive scheme exhausted its budget; carries the best estimate.
    #[error("quadrature did not converge: best estimate {value} (error {error})")]
    NonConvergence { value: f64, error: f64 },
    /// A resource guard tripped (size, enumeration, or memory cap).
    #[error("guard: {0}")]
    Guard(String),
    /// An internal invariant that valid inputs cannot violate.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    /// Input/output failure (table cache, CSV emission).
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
