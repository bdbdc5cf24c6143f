//! Cholesky-based helpers shared by the estimator and the profile engine.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning(format!("{what} has non-finite entries")));
    }
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::Conditioning(format!("{what} is not positive definite")))
}

/// `log|m|` for symmetric positive definite `m`, as twice the summed log of
/// the Cholesky diagonal. The empty matrix has log-determinant zero.
pub fn logdet_spd(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let chol = cholesky(m, "matrix")?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Solves `m x = b` for symmetric positive definite `m`.
pub fn solve_spd(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if m.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    Ok(cholesky(m, "matrix")?.solve(b))
}
