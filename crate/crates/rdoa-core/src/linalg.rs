//! Small dense-linear-algebra helpers shared by the estimator and metrics.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Cholesky factorization of a Hermitian positive-definite matrix, with a
/// typed error instead of nalgebra's `Option`.
///
/// nalgebra's complex Cholesky does not reject indefinite input (the complex
/// square root of a negative pivot exists), so positive-definiteness is
/// enforced here by requiring every factor diagonal entry to be real and
/// strictly positive.
pub fn cholesky(
    matrix: DMatrix<Complex64>,
    context: &'static str,
) -> Result<Cholesky<Complex64, Dyn>> {
    let chol = Cholesky::new(matrix).ok_or(Error::NotPositiveDefinite { context })?;
    let l = chol.l_dirty();
    for k in 0..l.nrows() {
        let d = l[(k, k)];
        if !(d.re > 0.0) || !d.re.is_finite() || d.im.abs() > 1e-10 * d.re {
            return Err(Error::NotPositiveDefinite { context });
        }
    }
    Ok(chol)
}

/// log det(Σ) from an existing Cholesky factor: 2·Σ ln L_kk.
pub fn log_det(chol: &Cholesky<Complex64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|k| 2.0 * l[(k, k)].re.ln()).sum()
}

/// Moore-Penrose pseudo-inverse via economy SVD, dropping singular values
/// below `rows · ε_machine · σ_max`. Handles rank-deficient input.
pub fn pseudo_inverse(matrix: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let svd = matrix.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = matrix.nrows() as f64 * f64::EPSILON * sigma_max;
    svd.pseudo_inverse(tol)
        .map_err(|_| Error::Singular { context: "pseudo_inverse" })
}

/// Hermitian inner product xᴴ M y.
pub fn quad_form(
    x: &nalgebra::DVector<Complex64>,
    m: &DMatrix<Complex64>,
    y: &nalgebra::DVector<Complex64>,
) -> Complex64 {
    (x.adjoint() * m * y)[(0, 0)]
}
