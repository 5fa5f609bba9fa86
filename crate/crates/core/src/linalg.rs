use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative pivot size below which a Cholesky factorisation is treated as
/// numerically singular.
const SINGULAR_PIVOT: f64 = 1e-13;

/// Solve the symmetric positive semi-definite system `a x = b`.
///
/// The plain system is tried first. If it is numerically singular,
/// `ridge * trace(a)` is added to the diagonal and the solve is retried.
pub(crate) fn solve_psd(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    if let Some(x) = try_cholesky(a, b) {
        return Ok(x);
    }
    let trace = a.trace();
    if !(trace.is_finite() && trace > 0.0) || ridge <= 0.0 {
        return Err(Error::Singular(format!(
            "{0}x{0} normal equations with trace {trace}",
            a.nrows()
        )));
    }
    let mut ridged = a.clone();
    for i in 0..ridged.nrows() {
        ridged[(i, i)] += ridge * trace;
    }
    try_cholesky(&ridged, b).ok_or_else(|| {
        Error::Singular(format!(
            "{0}x{0} normal equations remain singular after ridge {ridge:e}",
            a.nrows()
        ))
    })
}

fn try_cholesky(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let max_diag = a.diagonal().iter().fold(0.0f64, |m, &d| m.max(d.abs()));
    if !(max_diag.is_finite() && max_diag > 0.0) {
        return None;
    }
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..a.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if min_pivot < SINGULAR_PIVOT * max_diag {
        return None;
    }
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_system_needs_no_ridge() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = solve_psd(&a, &b, 1e-10).unwrap();
        assert!((&a * &x - &b).norm() < 1e-14);
    }

    #[test]
    fn singular_system_falls_back_to_ridge() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let x = solve_psd(&a, &b, 1e-10).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
        assert!(solve_psd(&DMatrix::zeros(2, 2), &b, 1e-10).is_err());
    }
}
