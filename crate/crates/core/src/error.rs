use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A pilot scenario violates one of its invariants.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// A function produced a non-finite value where a finite one was required.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Matrix dimensions do not conform.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A Hermitian matrix that must be positive definite was not.
    #[error("matrix is singular or indefinite: {0}")]
    Singular(String),

    /// A constrained subproblem has an empty feasible set.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative solver hit its iteration cap before reaching tolerance.
    #[error("iteration cap reached: {0}")]
    MaxIterations(String),

    /// Every candidate pilot fraction produced a non-positive rate.
    #[error("every pilot fraction yields a non-positive rate")]
    AllInfeasible,

    /// Malformed text input.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
