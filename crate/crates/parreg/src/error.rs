//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input rejected by a precondition (admissibility, invariant of a domain type).
    #[error("validation: {0}")]
    Validation(String),

    /// A grid or sampling configuration cannot support the requested operation.
    #[error("configuration: {0}")]
    Config(String),

    /// Argument outside the mathematical domain of the operation.
    #[error("domain: {0}")]
    Domain(String),

    /// Shape or grid mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An ellipticity certificate failed or a symbol turned out singular.
    #[error("ellipticity: {message} (epsilon = {epsilon:.3e})")]
    Ellipticity { message: String, epsilon: f64 },

    /// A perturbation was too large for the Neumann-series contraction.
    #[error("contraction check failed: {message} (measured rate {rate:.4})")]
    Contraction { message: String, rate: f64 },

    /// A symbol evaluator failed; the sample location is attached.
    #[error("symbol evaluation failed at {location:?}: {message}")]
    Eval { location: Vec<f64>, message: String },

    /// Requested data outside the stored extent (e.g. reflected extension).
    #[error("extrapolation: {0}")]
    Extrapolation(String),

    /// A linear-algebra kernel hit a numerically singular matrix.
    #[error("singular matrix: {0}")]
    Singular(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for failures of mathematical certificates rather than usage errors.
    pub fn is_mathematical(&self) -> bool {
        matches!(
            self,
            Error::Ellipticity { .. } | Error::Contraction { .. } | Error::Singular(_)
        )
    }
}
