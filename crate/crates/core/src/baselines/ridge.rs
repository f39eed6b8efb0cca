use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::cholesky_checked;
use crate::error::{ensure_finite, ForecastError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub alpha: f64,
    /// Coefficients on the original feature scale.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(ForecastError::LengthMismatch {
                left: self.coefficients.len(),
                right: row.len(),
            });
        }
        Ok(self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>())
    }
}

/// Ridge regression with an unpenalized intercept. Features are standardized
/// with training means and population standard deviations before the
/// penalty is applied; constant columns receive a zero coefficient.
pub fn fit_ridge(x: &Matrix, y: &[f64], alpha: f64) -> Result<RidgeModel> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(ForecastError::InvalidParameter(format!(
            "ridge alpha must be finite and >= 0, got {alpha}"
        )));
    }
    let n = x.n_rows();
    let p = x.n_cols();
    if n == 0 || n != y.len() {
        return Err(ForecastError::LengthMismatch { left: n, right: y.len() });
    }
    ensure_finite(y, "targets")?;
    if !x.is_finite() {
        return Err(ForecastError::NonFinite { what: "features", index: 0 });
    }

    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut means = vec![0.0; p];
    let mut sds = vec![0.0; p];
    for j in 0..p {
        let m = (0..n).map(|i| x.get(i, j)).sum::<f64>() / nf;
        let var = (0..n).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / nf;
        means[j] = m;
        sds[j] = var.sqrt();
    }
    let active: Vec<usize> = (0..p).filter(|&j| sds[j] > 0.0).collect();
    let mut coefficients = vec![0.0; p];
    if !active.is_empty() {
        let z = DMatrix::from_fn(n, active.len(), |i, k| {
            let j = active[k];
            (x.get(i, j) - means[j]) / sds[j]
        });
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = z.transpose() * &z;
        for k in 0..active.len() {
            gram[(k, k)] += alpha;
        }
        let chol = cholesky_checked(gram).map_err(|_| {
            ForecastError::Singular(
                "ridge normal equations are singular (collinear features); use alpha > 0".into(),
            )
        })?;
        let beta = chol.solve(&(z.transpose() * yc));
        for (k, &j) in active.iter().enumerate() {
            coefficients[j] = beta[k] / sds[j];
        }
    }
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(RidgeModel {
        alpha,
        coefficients,
        intercept,
    })
}
