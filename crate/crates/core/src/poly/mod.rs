//! Sparse multivariate polynomials and Chebyshev interpolation.
//!
//! [`Polynomial`] is the common currency of the crate: dynamics, barrier
//! functions, SOS multipliers and synthesized controllers are all stored in
//! the power basis over a fixed number of variables.

mod chebyshev;
mod dynamics;
mod monomial;
mod polynomial;

pub use chebyshev::{chebyshev_fit, ChebyshevFit, REMAINDER_INFLATION, VALIDATION_POINTS};
pub use dynamics::PolyDynamics;
pub use monomial::Monomial;
pub use polynomial::{ArithOp, Polynomial, ZERO_TOL};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("variable count mismatch: {left} vs {right}")]
    VarCountMismatch { left: usize, right: usize },
    #[error("expected a point of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variable x{var} out of range for {nvars} variables")]
    VariableOutOfRange { var: usize, nvars: usize },
    #[error("degenerate interval [{0}, {1}]")]
    InvalidDomain(f64, f64),
    #[error("function value is not finite at x = {0}")]
    NonFinite(f64),
    #[error("parse error: {0}")]
    Parse(String),
}
