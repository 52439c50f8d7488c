//! Closed-form ridge regression shared by the task-head and fusion fits.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Solves `min_W ||X W - Y||^2 + lambda ||W||^2` for `W`.
///
/// `x` is `samples x features`, `y` is `samples x outputs`. A zero `lambda`
/// yields the minimum-norm least-squares solution.
pub fn ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} design rows vs {} target rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge lambda must be >= 0, got {lambda}"
        )));
    }
    let mut gram = x.transpose() * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = x.transpose() * y;
    let scale = gram.amax().max(1.0);
    gram.svd(true, true)
        .solve(&rhs, scale * 1e-12)
        .map_err(|e| Error::InvalidArgument(format!("ridge solve failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_map() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let w = DMatrix::from_row_slice(2, 1, &[3.0, -2.0]);
        let y = &x * &w;
        let fit = ridge(&x, &y, 0.0).unwrap();
        assert!((fit - w).amax() < 1e-10);
    }

    #[test]
    fn rank_deficient_design_gives_min_norm_solution() {
        // duplicated column: weight is split evenly
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DMatrix::from_row_slice(3, 1, &[2.0, 4.0, 6.0]);
        let fit = ridge(&x, &y, 0.0).unwrap();
        assert!((fit[(0, 0)] - 1.0).abs() < 1e-9 && (fit[(1, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn huge_lambda_shrinks_to_zero() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let y = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(ridge(&x, &y, 1e12).unwrap().amax() < 1e-9);
        assert!(ridge(&x, &y, -1.0).is_err());
    }
}
