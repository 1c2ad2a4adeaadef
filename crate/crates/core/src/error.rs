//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the analysis, optimisation and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A series did not reach the requested tolerance within its term budget.
    #[error("series did not converge after {terms} terms (partial value {partial:e})")]
    NoConvergence { partial: f64, terms: usize },

    /// An input violates a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The requested combination is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The search space is empty, e.g. `q_sum < N` for allocations with one
    /// attempt per hop.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The search space exceeds the enumeration cap.
    #[error("search space holds {size} allocations, above the cap of {cap}; use the list algorithms instead")]
    SearchTooLarge { size: u128, cap: u128 },

    /// Invariant breakage that callers cannot trigger through valid input.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
