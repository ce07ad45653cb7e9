//! Error type shared across the crate.

/// Errors raised by score evaluation, estimation, and optimisation.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Inputs have incompatible shapes (matrix sizes, vector lengths).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter lies outside the mathematical domain of an operation
    /// (non-SPD covariance, coordinate outside the unit interval, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An evaluation produced NaN or infinity. Silent non-finite scores
    /// would corrupt divergence sums undetectably, so they are rejected
    /// at the point of production.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An argument violates an operation's contract (negative tolerance,
    /// non-unit direction, empty input, overlapping blocks, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Vertex enumeration was refused because 2^d would be too large.
    #[error("vertex enumeration refused: {0}")]
    VertexLimit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
