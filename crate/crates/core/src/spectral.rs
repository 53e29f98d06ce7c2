//! Extreme eigenvalue estimates for small symmetric PSD operators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 200_000;

/// Largest eigenvalue of the symmetric PSD operator `apply` on `R^dim`, by
/// power iteration with a Rayleigh-quotient stopping rule (relative change
/// below `tol`).
pub fn largest_eigenvalue(
    dim: usize,
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    tol: f64,
) -> Result<f64> {
    if dim == 0 {
        return Ok(0.0);
    }
    // A constant start vector lies in the kernel of every graph Laplacian, so
    // use a deterministic non-constant one.
    let mut v = DVector::from_fn(dim, |k, _| 1.0 + (k as f64 * 0.618_033_988_749_895).fract());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = apply(&v);
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        if !norm.is_finite() {
            return Err(Error::Numerical { context: "power iteration".into(), residual: norm });
        }
        if (next - estimate).abs() <= tol * next.abs() {
            return Ok(next);
        }
        estimate = next;
        v = w / norm;
    }
    Err(Error::Numerical {
        context: "power iteration stagnated".into(),
        residual: (apply(&v) - &v * estimate).norm(),
    })
}

/// Squared spectral norm `||H||^2`, i.e. the largest eigenvalue of `H^T H`.
pub fn spectral_norm_sq(h: &DMatrix<f64>) -> Result<f64> {
    // H H^T has the same nonzero spectrum and is usually the smaller side.
    if h.nrows() <= h.ncols() {
        largest_eigenvalue(h.nrows(), |v| h * (h.transpose() * v), POWER_TOL)
    } else {
        largest_eigenvalue(h.ncols(), |v| h.transpose() * (h * v), POWER_TOL)
    }
}

/// Gershgorin upper bound on the largest eigenvalue of a symmetric matrix.
pub fn gershgorin_bound(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
