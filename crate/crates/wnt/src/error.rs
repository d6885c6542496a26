//! Error types shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WntError {
    /// A stepper or fixed-point iteration failed to reach its tolerance.
    #[error("solver failure: {context} (worst residual {residual:.3e} at t = {location:.6})")]
    SolverFailure {
        context: String,
        residual: f64,
        location: f64,
    },

    /// An argument sits outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A bracketed search ran out of room.
    #[error("out of range: {context} (attempted bracket [{lo:.6}, {hi:.6}])")]
    OutOfRange { context: String, lo: f64, hi: f64 },

    /// Grid too coarse or otherwise unable to represent the request.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Time step constraint violated at the requested resolution.
    #[error("step-size error: {0}")]
    StepSize(String),

    /// A field blew up during time stepping.
    #[error("divergence at t = {t:.6}, x = {x:.6}: {what}")]
    Divergence { t: f64, x: f64, what: String },

    /// Iteration budget exhausted.
    #[error("non-convergence: {context} after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// Caller violated an interface contract (mismatched grids, endpoints, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, WntError>;
