//! Self-contained numerical routines used by every likelihood in the crate:
//! bounded scalar maximization, multivariate maximization, central-difference
//! derivatives, scalar root finding and semi-infinite quadrature.
//!
//! Objectives signal infeasible points by returning `f64::NEG_INFINITY`
//! rather than an error; every maximizer here routes around such points.

mod diff;
mod multivariate;
mod quad;
mod scalar;

pub use diff::{numerical_gradient, numerical_hessian, StepRule};
pub use multivariate::{maximize_multivariate, maximize_multivariate_with, MultivariateOptions};
pub use quad::{integrate_semi_infinite, integrate_semi_infinite_with, QuadratureOptions};
pub use scalar::{find_root_scalar, maximize_scalar_bounded, maximize_scalar_bounded_with_grid, SCALAR_INIT_GRID};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("invalid bounds: lo = {lo}, hi = {hi}")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("objective is -inf on every point of the initialization grid")]
    NoFinitePoint,
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
    #[error("non-finite function value at a finite-difference stencil point")]
    NonFiniteEvaluation,
    #[error("no sign change on [{lo}, {hi}]: g(lo) = {g_lo}, g(hi) = {g_hi}")]
    NoSignChange { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },
    #[error("quadrature did not reach the requested tolerance (estimate {estimate}, error {error})")]
    NonConvergentQuadrature { estimate: f64, error: f64 },
}

/// An open interval `(lo, hi)` with finite endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarBounds {
    lo: f64,
    hi: f64,
}

impl ScalarBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self, OptimError> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(OptimError::InvalidBounds { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub x_tol: f64,
    pub f_tol: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Tolerances {
    /// Defaults for one-dimensional searches and root finding.
    pub fn scalar() -> Self {
        Self { x_tol: 1e-8, f_tol: 1e-10, grad_tol: 1e-6, max_iters: 500 }
    }

    /// Defaults for simplex + quasi-Newton maximization.
    pub fn multivariate() -> Self {
        Self { x_tol: 1e-8, f_tol: 1e-10, grad_tol: 1e-6, max_iters: 2000 }
    }

    pub fn with_grad_tol(mut self, grad_tol: f64) -> Self {
        self.grad_tol = grad_tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    fn is_valid(&self) -> bool {
        self.x_tol > 0.0 && self.f_tol > 0.0 && self.grad_tol > 0.0 && self.max_iters >= 1
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::multivariate()
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub hessian_at_max: Option<DMatrix<f64>>,
}
