//! Thomas algorithm for tridiagonal systems.

use crate::error::{Error, Result};

/// Solves `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]` in place.
/// `sub[0]` and `sup[n-1]` are ignored.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = rhs.len();
    assert!(sub.len() == n && diag.len() == n && sup.len() == n);
    if n == 0 {
        return Ok(());
    }
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return Err(pivot_error(0, beta));
    }
    c[0] = sup[0] / beta;
    rhs[0] /= beta;
    for i in 1..n {
        beta = diag[i] - sub[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(pivot_error(i, beta));
        }
        c[i] = sup[i] / beta;
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

fn pivot_error(i: usize, beta: f64) -> Error {
    Error::Numerical {
        stage: "tridiagonal solve",
        detail: format!("pivot {beta} at row {i}"),
    }
}
