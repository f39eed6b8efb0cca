//! Benchmark models: ridge regression on the feature matrix and ARMA on raw
//! returns, plus the ADF stationarity check.

mod adf;
mod arma;
mod linalg;
mod ridge;

pub use adf::{adf_test, critical_values, AdfResult, PBand};
pub use arma::{aic_order_search, fit_arma, fit_arma_from, ArmaContext, ArmaModel, MAX_ORDER};
pub use ridge::{fit_ridge, RidgeModel};

use crate::error::{ForecastError, Result};

pub enum BaselineModel<'a> {
    Ridge(&'a RidgeModel),
    Arma(&'a ArmaModel),
}

pub enum ForecastContext<'a> {
    /// Feature row of the step being forecast.
    Features(&'a [f64]),
    Arma(&'a ArmaContext),
}

/// Single next-step mean forecast of a fitted benchmark.
pub fn forecast_one_step(model: BaselineModel<'_>, context: ForecastContext<'_>) -> Result<f64> {
    match (model, context) {
        (BaselineModel::Ridge(m), ForecastContext::Features(row)) => m.predict_row(row),
        (BaselineModel::Arma(m), ForecastContext::Arma(ctx)) => m.forecast(ctx),
        _ => Err(ForecastError::InvalidParameter(
            "forecast context does not match the model family".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    #[test]
    fn ridge_forecast_by_substitution() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![4.0]]).unwrap();
        let m = fit_ridge(&x, &[1.0, 3.0, 7.0], 0.0).unwrap();
        let f = forecast_one_step(BaselineModel::Ridge(&m), ForecastContext::Features(&[5.0])).unwrap();
        assert!((f - (m.intercept + m.coefficients[0] * 5.0)).abs() < 1e-15);
        assert!((f - 9.0).abs() < 1e-10);
    }

    #[test]
    fn context_must_match_family() {
        let m = ArmaModel {
            p: 0,
            q: 0,
            constant: 0.002,
            ar_coeffs: vec![],
            ma_coeffs: vec![],
            sigma2: 1e-4,
            aic: 0.0,
            n_obs: 100,
        };
        let ctx = m.context(&[0.1, 0.2]).unwrap();
        assert_eq!(forecast_one_step(BaselineModel::Arma(&m), ForecastContext::Arma(&ctx)).unwrap(), 0.002);
        assert!(forecast_one_step(BaselineModel::Arma(&m), ForecastContext::Features(&[1.0])).is_err());
    }
}
