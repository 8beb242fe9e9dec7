use thiserror::Error;

/// Errors raised by the solvers and the reference oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty population")]
    EmptyPopulation,
    #[error("unevaluated individual")]
    UnevaluatedIndividual,
    #[error("invalid vertex {vertex} (instance has {n} vertices)")]
    InvalidVertex { vertex: usize, n: usize },
    #[error("duplicate vertex {0} in tour")]
    DuplicateVertex(usize),
    #[error("subset mismatch")]
    SubsetMismatch,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("empty subset")]
    EmptySubset,
    #[error("instance too large for exact solver ({n} > {max_n})")]
    TooLarge { n: usize, max_n: usize },
    #[error("degenerate design matrix")]
    DegenerateDesign,
    #[error("unknown loss `{0}`")]
    UnknownLoss(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
