use thiserror::Error;

/// Errors shared by every module of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value lies outside the mathematical domain of the operation
    /// (coordinate outside [0,1], negative Poisson mean, non-positive rate, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector or matrix dimensions do not match.
    #[error("shape error: {0}")]
    Shape(String),

    /// Too few samples for the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A path density is identically zero (or vanishes on a node), so the
    /// control-field construction is undefined.
    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    /// A formula produced a value outside its valid range (e.g. the argument
    /// of a logarithm collapsed to zero) due to numerical degeneracy.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    /// Input data is malformed or lacks required resolution.
    #[error("data error: {0}")]
    Data(String),

    /// An argument is structurally invalid (empty family, zero step, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
