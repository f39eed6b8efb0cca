use nalgebra::{DMatrix, DVector};

use crate::error::{ForecastError, Result};

pub(crate) struct OlsFit {
    pub coef: Vec<f64>,
    /// `(X'X)^-1`, needed for standard errors.
    pub xtx_inv: DMatrix<f64>,
    pub ssr: f64,
    pub n_obs: usize,
}

impl OlsFit {
    pub fn std_error(&self, j: usize) -> f64 {
        let dof = self.n_obs as f64 - self.coef.len() as f64;
        (self.ssr / dof * self.xtx_inv[(j, j)]).sqrt()
    }
}

/// Ordinary least squares through the Cholesky factor of `X'X`.
pub(crate) fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let chol = cholesky_checked(xtx)?;
    let coef = chol.solve(&xty);
    let resid = y - x * &coef;
    Ok(OlsFit {
        coef: coef.iter().copied().collect(),
        xtx_inv: chol.inverse(),
        ssr: resid.norm_squared(),
        n_obs: x.nrows(),
    })
}

/// Cholesky factorization that also rejects numerically rank-deficient
/// matrices whose factor succeeds only through rounding.
pub(crate) fn cholesky_checked(a: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let chol = a
        .cholesky()
        .ok_or_else(|| ForecastError::Singular("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * scale) {
        return Err(ForecastError::Singular(
            "matrix is numerically rank deficient".into(),
        ));
    }
    Ok(chol)
}
