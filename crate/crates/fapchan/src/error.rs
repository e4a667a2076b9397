//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by parameter validation and numerical routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Construction-time validation failed (dimension, lengths, signs).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    /// An argument lies outside a function's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// An intermediate quantity would overflow f64.
    #[error("overflow: {0}")]
    Overflow(String),
    /// Adaptive quadrature exhausted its subdivision budget.
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),
    /// An iterative solver exhausted its iteration budget.
    #[error("solver did not converge: {0}")]
    SolverNonConvergence(String),
    /// An operation that needs data received none.
    #[error("empty input: {0}")]
    EmptyInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
