//! Conjugate gradients for symmetric positive definite operators given only
//! as matrix-vector products.

use super::{dot, norm, LinalgError};

/// Outcome of a CG solve. `converged` is false when the iteration budget ran
/// out first; `x` is then the best iterate found.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final residual norm `|(A + damping I) x - b|`.
    pub residual_norm: f64,
}

/// Solve `(A + damping I) x = b` where `A` is available as the product
/// `hvp(v) = A v`. Stops once the residual drops to `tol * |b|`.
pub fn cg_solve(
    hvp: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution, LinalgError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = b.len();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = hvp(v);
        assert_eq!(out.len(), n, "operator changed dimension");
        if damping != 0.0 {
            for (o, x) in out.iter_mut().zip(v) {
                *o += damping * x;
            }
        }
        out
    };

    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            converged: true,
            residual_norm: 0.0,
        });
    }
    let threshold = tol * b_norm;

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);

    for iter in 0..max_iter {
        if rr.sqrt() <= threshold {
            return Ok(CgSolution {
                x,
                iterations: iter,
                converged: true,
                residual_norm: rr.sqrt(),
            });
        }
        let ap = apply(&p);
        let curvature = dot(&p, &ap);
        if !curvature.is_finite() {
            return Err(LinalgError::DivergedNumerically { iter });
        }
        if curvature <= 0.0 {
            return Err(LinalgError::IndefiniteOperator { curvature, iter });
        }
        let alpha = rr / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if !rr_new.is_finite() {
            return Err(LinalgError::DivergedNumerically { iter });
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }

    let converged = rr.sqrt() <= threshold;
    Ok(CgSolution {
        x,
        iterations: max_iter,
        converged,
        residual_norm: rr.sqrt(),
    })
}
