//! Model families shared by tuning, walk-forward and the experiment runner.

use serde::{Deserialize, Serialize};

use crate::baselines::{aic_order_search, fit_arma, fit_ridge, ArmaModel};
use crate::error::Result;
use crate::gbt::{fit_gbt, GbtParams};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Gbt,
    Ridge,
    Arma,
}

impl ModelFamily {
    pub fn label(self) -> &'static str {
        match self {
            ModelFamily::Gbt => "GBT",
            ModelFamily::Ridge => "Ridge",
            ModelFamily::Arma => "ARIMA",
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A fully specified model: family plus the hyperparameters used at every
/// refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Gbt(GbtParams),
    Ridge { alpha: f64 },
    Arma { p: usize, q: usize },
    /// ARMA whose order is re-selected by AIC at every fit.
    ArmaSearch { max_p: usize, max_q: usize },
}

impl ModelSpec {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Gbt(_) => ModelFamily::Gbt,
            ModelSpec::Ridge { .. } => ModelFamily::Ridge,
            ModelSpec::Arma { .. } | ModelSpec::ArmaSearch { .. } => ModelFamily::Arma,
        }
    }

    /// Fits on feature rows and predicts `x_eval`. ARMA specs ignore the
    /// features and fit on `y_train` as a raw return sequence, forecasting
    /// one step past its end for every evaluation row.
    pub fn fit_predict(&self, x_train: &Matrix, y_train: &[f64], x_eval: &Matrix) -> Result<Vec<f64>> {
        match self {
            ModelSpec::Gbt(params) => {
                let model = fit_gbt(x_train, y_train, params)?;
                Ok(x_eval.rows().map(|row| model.predict_row(row)).collect())
            }
            ModelSpec::Ridge { alpha } => {
                let model = fit_ridge(x_train, y_train, *alpha)?;
                x_eval.rows().map(|row| model.predict_row(row)).collect()
            }
            _ => {
                let f = self.arma_forecast(y_train)?;
                Ok(vec![f; x_eval.n_rows()])
            }
        }
    }

    /// Fits an ARMA spec on `history` and forecasts the next return.
    pub(crate) fn arma_forecast(&self, history: &[f64]) -> Result<f64> {
        let model: ArmaModel = match *self {
            ModelSpec::Arma { p, q } => fit_arma(history, p, q)?,
            ModelSpec::ArmaSearch { max_p, max_q } => aic_order_search(history, max_p, max_q)?,
            _ => {
                return Err(crate::ForecastError::InvalidParameter(
                    "not an ARMA specification".into(),
                ))
            }
        };
        model.forecast(&model.context(history)?)
    }
}
