use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::ols;
use crate::error::{ensure_finite, ForecastError, Result};

/// Coarse significance band of the ADF statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PBand {
    #[serde(rename = "<0.01")]
    Below1,
    #[serde(rename = "0.01-0.05")]
    Below5,
    #[serde(rename = "0.05-0.10")]
    Below10,
    #[serde(rename = ">0.10")]
    Above10,
}

impl std::fmt::Display for PBand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PBand::Below1 => "<0.01",
            PBand::Below5 => "0.01-0.05",
            PBand::Below10 => "0.05-0.10",
            PBand::Above10 => ">0.10",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub lags: usize,
    pub n_obs: usize,
    /// Critical values at the 1%, 5% and 10% levels.
    pub critical_values: [f64; 3],
    pub p_band: PBand,
}

impl AdfResult {
    pub fn rejects_unit_root_at(&self, level: f64) -> bool {
        match level {
            l if l <= 0.01 => self.statistic < self.critical_values[0],
            l if l <= 0.05 => self.statistic < self.critical_values[1],
            _ => self.statistic < self.critical_values[2],
        }
    }
}

// MacKinnon (2010) response surfaces, constant-only regression, one series:
// cv(T) = b0 + b1/T + b2/T^2 + b3/T^3
const TAU_C: [[f64; 4]; 3] = [
    [-3.43035, -6.5393, -16.786, -79.433],
    [-2.86154, -2.8903, -4.234, -40.040],
    [-2.56677, -1.5384, -2.809, 0.0],
];

pub fn critical_values(n_obs: usize) -> [f64; 3] {
    let t = n_obs as f64;
    TAU_C.map(|b| b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t))
}

/// Augmented Dickey-Fuller test with a constant and
/// `floor(12 * (n / 100)^(1/4))` lagged differences.
pub fn adf_test(series: &[f64]) -> Result<AdfResult> {
    let n = series.len();
    if n < 25 {
        return Err(ForecastError::InsufficientData(format!(
            "ADF test needs at least 25 observations, got {n}"
        )));
    }
    ensure_finite(series, "series")?;
    let lags = (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize;
    let dy: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    // dy[t-1] = y[t] - y[t-1]; regress for t - 1 in lags..dy.len()
    let rows = dy.len() - lags;
    let cols = 2 + lags;
    let x = DMatrix::from_fn(rows, cols, |i, j| {
        let k = i + lags; // index into dy
        match j {
            0 => 1.0,
            1 => series[k],
            _ => dy[k - (j - 1)],
        }
    });
    let y = DVector::from_iterator(rows, dy[lags..].iter().copied());
    let fit = ols(&x, &y).map_err(|e| ForecastError::Degenerate(format!("ADF regression: {e}")))?;
    let se = fit.std_error(1);
    if !(se > 0.0 && se.is_finite()) {
        return Err(ForecastError::Degenerate("ADF coefficient has zero standard error".into()));
    }
    let statistic = fit.coef[1] / se;
    let cv = critical_values(rows);
    let p_band = if statistic < cv[0] {
        PBand::Below1
    } else if statistic < cv[1] {
        PBand::Below5
    } else if statistic < cv[2] {
        PBand::Below10
    } else {
        PBand::Above10
    };
    Ok(AdfResult {
        statistic,
        lags,
        n_obs: rows,
        critical_values: cv,
        p_band,
    })
}
