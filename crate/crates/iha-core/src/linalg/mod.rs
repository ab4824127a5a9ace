//! Dense symmetric linear algebra: eigendecomposition, conditioned inverse
//! application, and a matrix-free conjugate-gradient solver.

mod cg;
mod eigen;
mod sym;

pub use cg::{cg_solve, CgSolution};
pub use eigen::{
    conditioned_inverse_apply, sym_eigendecompose, ConditioningPolicy, EigenDecomposition,
};
pub use sym::SymMatrix;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("input contains non-finite entries")]
    NonFiniteInput,
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {delta}")]
    NotSymmetric { i: usize, j: usize, delta: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("ill-conditioned inverse: smallest damped eigenvalue {sigma} <= 0")]
    IllConditioned { sigma: f64 },
    #[error("conjugate gradient produced a non-finite iterate at iteration {iter}")]
    DivergedNumerically { iter: usize },
    #[error("operator is not positive definite: p'Ap = {curvature} at iteration {iter}")]
    IndefiniteOperator { curvature: f64, iter: usize },
    #[error("invalid conditioning policy: {0}")]
    InvalidPolicy(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad file format: {0}")]
    FormatError(String),
}

/// Euclidean dot product.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
