use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinexError {
    /// An input lies outside the set where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A structural check on an input failed (bad shapes, non-unit vectors).
    #[error("validation error: {0}")]
    Validation(String),
    /// A sum over mass classes overflowed.
    #[error("range error: non-finite result at beta = {beta}")]
    Range { beta: f64 },
    /// An iterative solver did not reach its tolerance.
    #[error("convergence error: {0}")]
    Convergence(String),
    /// A time step was rejected (CFL, guards, inadmissible states).
    #[error("step error: {0}")]
    Step(String),
    /// The requested configuration exceeds the work budget.
    #[error("cost guard: predicted {predicted} inner iterations exceeds {limit}")]
    CostGuard { predicted: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, KinexError>;
