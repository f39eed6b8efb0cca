//! One-step-ahead forecasting of daily log-returns with gradient-boosted
//! trees, ridge and ARMA benchmarks, walk-forward validation, and forecast
//! evaluation statistics.

pub mod error;
mod seeding;
pub mod model;
pub mod tuning;
pub mod evaluation;
pub mod walkforward;
pub mod baselines;
pub mod features;
pub mod gbt;
pub mod io;
pub mod matrix;
pub mod series;

pub use error::{ForecastError, Result};
