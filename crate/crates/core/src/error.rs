use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A distribution or kernel parameter is outside its admissible range.
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },

    /// The tuning constant of an estimator is not admissible for the model.
    #[error("invalid tuning: {0}")]
    Tuning(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error("quadrature did not converge (estimated residual {residual:e})")]
    Quadrature { residual: f64 },

    /// A bracketed root search could not find or refine a root.
    #[error("root finding failed on [{lo}, {hi}]: {reason}")]
    RootFinding { lo: f64, hi: f64, reason: String },

    /// The data do not support the requested fit.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A matrix that must be positive definite is not.
    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    /// Too few observations for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Dimensions of the arguments do not agree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    /// A textual specification could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// The minimum-variance problem has no feasible allocation.
    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    /// A Monte Carlo experiment lost too many trials.
    #[error("experiment failed: {0}")]
    Experiment(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, value: f64, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason: reason.into(),
    }
}
