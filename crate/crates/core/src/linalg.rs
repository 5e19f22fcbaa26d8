//! Dense regularized least squares.
//!
//! One solver backs both predictors: the polynomial fit calls it with
//! λ = 0 on a Vandermonde system, the ELM output layer with λ > 0 on
//! random ReLU features.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Minimize `Σ_n ‖t_n − O z_n‖² + λ‖O‖_F²` over `O`.
///
/// `z` is h×N (one feature column per sample), `t` is Q×N. The unique
/// minimizer is `O* = T Zᵀ (Z Zᵀ + λI)⁻¹`, computed here through a
/// Cholesky factorization of the shifted Gram matrix, with a pivoted-LU
/// fallback; the inverse is never formed explicitly.
pub fn solve_ridge(z: &DMatrix<f64>, t: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if z.ncols() != t.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "features are {}x{} but targets are {}x{}",
            z.nrows(),
            z.ncols(),
            t.nrows(),
            t.ncols()
        )));
    }
    if z.ncols() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if !z.iter().all(|v| v.is_finite()) || !t.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput("solve_ridge"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::NonFiniteInput("solve_ridge lambda"));
    }

    let mut gram = z * z.transpose();
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = t * z.transpose();
    solve_with_gram(&gram, &rhs, lambda)
}

/// Same solve, but with `Z Zᵀ + λI` and `T Zᵀ` already accumulated.
///
/// The tuner calls this directly so that one Gram matrix can be updated
/// incrementally across validation folds instead of rebuilt per fold.
pub(crate) fn solve_with_gram(
    gram: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    // gram is symmetric; solve gram · Oᵀ = rhsᵀ.
    let rhs_t = rhs.transpose();
    if let Some(chol) = gram.clone().cholesky() {
        return Ok(chol.solve(&rhs_t).transpose());
    }
    match gram.clone().full_piv_lu().solve(&rhs_t) {
        Some(sol) => Ok(sol.transpose()),
        None => Err(Error::SingularSystem { lambda }),
    }
}

/// Vandermonde design matrix: row i = `[1, n_i, n_i², ..., n_i^degree]`.
pub fn vandermonde(day_indices: &[i64], degree: usize) -> DMatrix<f64> {
    DMatrix::from_fn(day_indices.len(), degree + 1, |i, j| {
        (day_indices[i] as f64).powi(j as i32)
    })
}
