use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

pub(crate) type Chol = Cholesky<f64, Dyn>;

/// Ratio of the largest to the smallest diagonal entry, a cheap conditioning
/// diagnostic for error messages.
pub(crate) fn diagonal_ratio(a: &DMatrix<f64>) -> f64 {
    let d = a.diagonal();
    let (lo, hi) = d
        .iter()
        .fold((f64::INFINITY, 0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    hi / lo
}

/// Cholesky factor of an SPD matrix, retried once with `1e-10·trace/m` added
/// to the diagonal.
pub(crate) fn cholesky_with_jitter(a: DMatrix<f64>) -> Result<Chol> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix to factor has non-finite entries".into()));
    }
    let m = a.nrows();
    let ratio = diagonal_ratio(&a);
    let jitter = 1e-10 * a.trace() / m.max(1) as f64;
    let retry = a.clone();
    if let Some(c) = Cholesky::new(a) {
        return Ok(c);
    }
    let mut b = retry;
    for i in 0..m {
        b[(i, i)] += jitter;
    }
    Cholesky::new(b).ok_or_else(|| {
        Error::Factorization(format!(
            "{m}×{m} system is not positive definite (diagonal ratio {ratio:.3e})"
        ))
    })
}

/// `‖L⁻¹ r‖²` for each row `r` of `rows`, i.e. the diagonal of `R A⁻¹ Rᵀ`.
pub(crate) fn quad_diag(chol: &Chol, rows: &DMatrix<f64>) -> Vec<f64> {
    let mut t = rows.transpose();
    let solved = chol.l().solve_lower_triangular_mut(&mut t);
    debug_assert!(solved);
    t.column_iter().map(|c| c.norm_squared()).collect()
}

pub(crate) fn log_det(chol: &Chol) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}
