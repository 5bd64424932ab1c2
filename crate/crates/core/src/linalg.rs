//! Small dense linear-algebra helpers shared by the surrogates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter added to Gram diagonals before factorization.
pub const JITTER: f64 = 1e-8;

/// Factorizes `mat + jitter * I`.
pub fn cholesky(mut mat: DMatrix<f64>, jitter: f64, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    let n = mat.nrows();
    for i in 0..n {
        mat[(i, i)] += jitter;
    }
    let (min_diag, max_diag) = diag_range(&mat);
    Cholesky::new(mat).ok_or(Error::NumericalFailure {
        context,
        size: n,
        min_diag,
        max_diag,
        jitter,
    })
}

/// Like [`cholesky`] but retries with ten times more jitter until `max_jitter` is exceeded.
pub fn cholesky_escalating(
    mat: DMatrix<f64>,
    jitter: f64,
    max_jitter: f64,
    context: &'static str,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut j = jitter;
    loop {
        match cholesky(mat.clone(), j, context) {
            Ok(c) => return Ok((c, j)),
            Err(e) if j * 10.0 > max_jitter => return Err(e),
            Err(_) => j *= 10.0,
        }
    }
}

fn diag_range(mat: &DMatrix<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..mat.nrows() {
        lo = lo.min(mat[(i, i)]);
        hi = hi.max(mat[(i, i)]);
    }
    (lo, hi)
}

/// `log |A|` from the factor of `A`.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

/// Solves `L v = b` for the lower factor of `chol`.
pub fn solve_lower(chol: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    let mut v = b.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut v);
    v
}

pub fn solve_lower_mat(chol: &Cholesky<f64, Dyn>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut v = b.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut v);
    v
}

pub fn point_matrix(points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let d = points.first().map_or(0, |p| p.len());
    DMatrix::from_fn(n, d, |i, j| points[i][j])
}
