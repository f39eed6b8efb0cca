//! One-step-ahead walk-forward evaluation with per-step refits.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ForecastError, Result};
use crate::features::DesignMatrix;
use crate::model::{ModelFamily, ModelSpec};
use crate::series::{PriceSeries, ReturnSeries, SplitIndex};

pub const DEFAULT_ROLLING_LENGTH: usize = 800;
pub const MIN_ROLLING_LENGTH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WindowScheme {
    Expanding,
    Rolling { length: usize },
}

impl WindowScheme {
    pub fn rolling() -> Self {
        WindowScheme::Rolling {
            length: DEFAULT_ROLLING_LENGTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WindowScheme::Rolling { length } if length < MIN_ROLLING_LENGTH => Err(ForecastError::InvalidParameter(
                format!("rolling window must hold at least {MIN_ROLLING_LENGTH} rows, got {length}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            WindowScheme::Expanding => "Expanding",
            WindowScheme::Rolling { .. } => "Rolling",
        }
    }
}

/// Training rows `[start, end)` for test step `step`; row `end` is the one
/// being forecast.
pub fn window_bounds(step: usize, train_end: usize, scheme: WindowScheme) -> (usize, usize) {
    let end = train_end + step;
    match scheme {
        WindowScheme::Expanding => (0, end),
        WindowScheme::Rolling { length } => (end.saturating_sub(length), end),
    }
}

/// Reproducibility stamp attached to every run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub data_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub date: NaiveDate,
    pub actual_return: f64,
    pub predicted_return: f64,
    pub actual_price: f64,
    pub prior_price: f64,
    /// `prior_price * exp(predicted_return)`.
    pub predicted_price: f64,
    pub window_start: usize,
    pub window_end: usize,
    /// The training targets were constant, so their value was forecast
    /// without fitting a model.
    pub constant_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFailure {
    pub step: usize,
    pub date: NaiveDate,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkForwardResult {
    pub family: ModelFamily,
    pub scheme: WindowScheme,
    pub lag_count: usize,
    pub spec: ModelSpec,
    pub records: Vec<StepRecord>,
    pub failures: Vec<StepFailure>,
    pub manifest: RunManifest,
}

impl WalkForwardResult {
    pub fn actual_returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.actual_return).collect()
    }

    pub fn predicted_returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.predicted_return).collect()
    }

    pub fn actual_prices(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.actual_price).collect()
    }

    pub fn predicted_prices(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.predicted_price).collect()
    }
}

/// Everything a walk-forward run reads. `design` rows must come from
/// `returns`, which in turn must come from `prices`.
pub struct WalkForwardInput<'a> {
    pub prices: &'a PriceSeries,
    pub returns: &'a ReturnSeries,
    pub design: &'a DesignMatrix,
    pub split: SplitIndex,
    pub lag_count: usize,
}

/// Refits `spec` on the window of every test row and forecasts that row.
/// ARMA specs fit on the raw returns preceding the forecast target: all of
/// them for expanding windows, the last `length` for rolling ones.
/// Steps are independent and run in parallel; a failing step is recorded
/// and the run continues.
pub fn walk_forward_run(
    input: &WalkForwardInput<'_>,
    spec: &ModelSpec,
    scheme: WindowScheme,
    manifest: RunManifest,
) -> Result<WalkForwardResult> {
    scheme.validate()?;
    let design = input.design;
    let split = input.split;
    if split.n != design.n_rows() || split.train_end == 0 || split.train_end >= design.n_rows() {
        return Err(ForecastError::InvalidParameter(format!(
            "split over {} rows does not match a design matrix of {} rows",
            split.n,
            design.n_rows()
        )));
    }
    let returns = input.returns.values();
    let closes = input.prices.closes();
    if closes.len() != returns.len() + 1 {
        return Err(ForecastError::LengthMismatch {
            left: closes.len(),
            right: returns.len() + 1,
        });
    }

    let outcomes: Vec<std::result::Result<StepRecord, StepFailure>> = (0..split.test_len())
        .into_par_iter()
        .map(|step| {
            let row = split.train_end + step;
            let date = design.row_dates[row];
            run_step(input, spec, scheme, step).map_err(|e| StepFailure {
                step,
                date,
                message: e.to_string(),
            })
        })
        .collect();

    let mut records = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(WalkForwardResult {
        family: spec.family(),
        scheme,
        lag_count: input.lag_count,
        spec: spec.clone(),
        records,
        failures,
        manifest,
    })
}

fn run_step(input: &WalkForwardInput<'_>, spec: &ModelSpec, scheme: WindowScheme, step: usize) -> Result<StepRecord> {
    let design = input.design;
    let (start, end) = window_bounds(step, input.split.train_end, scheme);
    let y = &design.targets[start..end];
    let target = design.return_index[end];

    let constant = y.iter().all(|v| *v == y[0]);
    let predicted_return = if constant {
        y[0]
    } else {
        match spec {
            ModelSpec::Arma { .. } | ModelSpec::ArmaSearch { .. } => {
                let history_start = match scheme {
                    WindowScheme::Expanding => 0,
                    WindowScheme::Rolling { length } => target.saturating_sub(length),
                };
                spec.arma_forecast(&input.returns.values()[history_start..target])?
            }
            _ => {
                let x = &design.features;
                spec.fit_predict(&x.slice_rows(start, end), y, &x.slice_rows(end, end + 1))?[0]
            }
        }
    };
    if !predicted_return.is_finite() {
        return Err(ForecastError::NonFinite {
            what: "predicted return",
            index: end,
        });
    }
    let closes = input.prices.closes();
    let prior_price = closes[target];
    Ok(StepRecord {
        step,
        date: design.row_dates[end],
        actual_return: design.targets[end],
        predicted_return,
        actual_price: closes[target + 1],
        prior_price,
        predicted_price: prior_price * predicted_return.exp(),
        window_start: start,
        window_end: end,
        constant_fallback: constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{assemble_design_matrix, FeatureSpec};
    use crate::series::{chronological_split, log_returns};

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        (0..n).map(|i| start + chrono::Days::new(i as u64)).collect()
    }

    #[test]
    fn bounds() {
        assert_eq!(window_bounds(0, 500, WindowScheme::Expanding), (0, 500));
        assert_eq!(window_bounds(0, 900, WindowScheme::rolling()), (100, 900));
        assert_eq!(window_bounds(5, 300, WindowScheme::rolling()), (0, 305));
        assert!(WindowScheme::Rolling { length: 10 }.validate().is_err());
    }

    #[test]
    fn constant_prices_use_the_fallback() {
        let prices = PriceSeries::new(dates(200), vec![100.0; 200]).unwrap();
        let returns = log_returns(&prices).unwrap();
        let design = assemble_design_matrix(&returns, &FeatureSpec::with_lags(10)).unwrap();
        let split = chronological_split(design.n_rows(), 0.2).unwrap();
        let input = WalkForwardInput {
            prices: &prices,
            returns: &returns,
            design: &design,
            split,
            lag_count: 10,
        };
        for spec in [ModelSpec::Ridge { alpha: 1.0 }, ModelSpec::Arma { p: 1, q: 0 }] {
            let res = walk_forward_run(&input, &spec, WindowScheme::Expanding, RunManifest::default()).unwrap();
            assert!(res.failures.is_empty());
            assert_eq!(res.records.len(), split.test_len());
            for r in &res.records {
                assert!(r.constant_fallback);
                assert_eq!(r.predicted_return, 0.0);
                assert_eq!(r.predicted_price, r.prior_price);
            }
        }
    }

    #[test]
    fn records_reconstruct_from_actual_prior_close() {
        let closes: Vec<f64> = (0..300).map(|i| 100.0 * (1.0 + 0.01 * ((i * 7 % 11) as f64 - 5.0) / 5.0)).collect();
        let prices = PriceSeries::new(dates(300), closes.clone()).unwrap();
        let returns = log_returns(&prices).unwrap();
        let design = assemble_design_matrix(&returns, &FeatureSpec::with_lags(10)).unwrap();
        let split = chronological_split(design.n_rows(), 0.2).unwrap();
        let input = WalkForwardInput {
            prices: &prices,
            returns: &returns,
            design: &design,
            split,
            lag_count: 10,
        };
        let res = walk_forward_run(&input, &ModelSpec::Ridge { alpha: 0.5 }, WindowScheme::Expanding, RunManifest::default())
            .unwrap();
        assert_eq!(res.records.len(), split.test_len());
        for (k, r) in res.records.iter().enumerate() {
            assert_eq!(r.step, k);
            let t = design.return_index[split.train_end + k];
            assert_eq!(r.prior_price, closes[t]);
            assert_eq!(r.actual_price, closes[t + 1]);
            assert_eq!(r.predicted_price, r.prior_price * r.predicted_return.exp());
            assert_eq!(prices.dates()[t + 1], r.date);
        }
    }
}
