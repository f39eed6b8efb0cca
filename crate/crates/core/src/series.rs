//! Price and return containers, the log-return transform, one-step price
//! reconstruction, and chronological train/test splitting.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ForecastError, Result};

/// Ordered daily closing prices. Dates are treated as opaque ordered labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(ForecastError::LengthMismatch {
                left: dates.len(),
                right: closes.len(),
            });
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(ForecastError::UnorderedDates { index: i + 1 });
        }
        if let Some(index) = closes.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(ForecastError::InvalidPrice {
                index,
                value: closes[index],
            });
        }
        Ok(Self { dates, closes })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

/// Daily log-returns, each dated at the later of the two closes it spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    dates: Vec<NaiveDate>,
    returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        if dates.len() != returns.len() {
            return Err(ForecastError::LengthMismatch {
                left: dates.len(),
                right: returns.len(),
            });
        }
        ensure_finite(&returns, "returns")?;
        Ok(Self { dates, returns })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Sample mean and sample standard deviation (n - 1 divisor).
    pub fn mean_std(&self) -> (f64, f64) {
        let n = self.returns.len() as f64;
        let mean = self.returns.iter().sum::<f64>() / n;
        let ss: f64 = self.returns.iter().map(|r| (r - mean).powi(2)).sum();
        (mean, (ss / (n - 1.0)).sqrt())
    }
}

/// `returns[t] = ln(closes[t + 1] / closes[t])`.
pub fn log_returns(prices: &PriceSeries) -> Result<ReturnSeries> {
    let closes = prices.closes();
    if closes.len() < 2 {
        return Err(ForecastError::InsufficientData(format!(
            "log-returns need at least 2 prices, got {}",
            closes.len()
        )));
    }
    // PriceSeries already enforces positivity; re-checked because the fields
    // can be deserialized without going through `new`.
    if let Some(index) = closes.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(ForecastError::InvalidPrice {
            index,
            value: closes[index],
        });
    }
    let returns = closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    ReturnSeries::new(prices.dates()[1..].to_vec(), returns)
}

/// One-step-ahead reconstruction `out[t] = prev_closes[t] * exp(predicted[t])`,
/// where `prev_closes[t]` is the realized close preceding each forecast.
pub fn reconstruct_prices(prev_closes: &[f64], predicted_returns: &[f64]) -> Result<Vec<f64>> {
    if prev_closes.len() != predicted_returns.len() {
        return Err(ForecastError::LengthMismatch {
            left: prev_closes.len(),
            right: predicted_returns.len(),
        });
    }
    ensure_finite(prev_closes, "prior closes")?;
    ensure_finite(predicted_returns, "predicted returns")?;
    Ok(prev_closes
        .iter()
        .zip(predicted_returns)
        .map(|(p, r)| p * r.exp())
        .collect())
}

/// Boundary between the training block and the trailing test block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitIndex {
    /// Exclusive end of the training rows.
    pub train_end: usize,
    /// First test row; always equal to `train_end`.
    pub test_start: usize,
    pub test_fraction: f64,
    pub n: usize,
}

impl SplitIndex {
    pub fn test_len(&self) -> usize {
        self.n - self.test_start
    }
}

pub fn chronological_split(n: usize, test_fraction: f64) -> Result<SplitIndex> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ForecastError::InvalidParameter(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if n < 5 {
        return Err(ForecastError::InsufficientData(format!(
            "chronological split needs at least 5 rows, got {n}"
        )));
    }
    let train_end = (n as f64 * (1.0 - test_fraction)).floor() as usize;
    if train_end == 0 || train_end >= n {
        return Err(ForecastError::InvalidParameter(format!(
            "test fraction {test_fraction} leaves an empty block for n = {n}"
        )));
    }
    Ok(SplitIndex {
        train_end,
        test_start: train_end,
        test_fraction,
        n,
    })
}
