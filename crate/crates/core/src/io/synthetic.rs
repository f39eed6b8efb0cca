use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ForecastError, Result};
use crate::series::PriceSeries;

/// Noise scale multiplier in force from return index `start` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolRegime {
    pub start: usize,
    pub multiplier: f64,
}

/// AR(1) log-returns `r_t = ar_coeff * r_{t-1} + sd_t * e_t` turned into a
/// business-day price path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Number of prices; the series has `n - 1` returns.
    pub n: usize,
    pub ar_coeff: f64,
    pub noise_sd: f64,
    #[serde(default)]
    pub vol_regimes: Vec<VolRegime>,
    pub seed: u64,
    #[serde(default = "default_initial_price")]
    pub initial_price: f64,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
}

fn default_initial_price() -> f64 {
    1000.0
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

impl SyntheticSpec {
    pub fn ar1(n: usize, ar_coeff: f64, noise_sd: f64, seed: u64) -> Self {
        Self {
            n,
            ar_coeff,
            noise_sd,
            vol_regimes: Vec::new(),
            seed,
            initial_price: default_initial_price(),
            start_date: default_start_date(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ForecastError::InvalidParameter(m));
        if !(self.ar_coeff.abs() < 1.0) {
            return bad(format!("|ar_coeff| must be below 1, got {}", self.ar_coeff));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be positive, got {}", self.noise_sd));
        }
        if self.n < 500 {
            return bad(format!("synthetic series need n >= 500, got {}", self.n));
        }
        if !(self.initial_price > 0.0 && self.initial_price.is_finite()) {
            return bad("initial_price must be positive".into());
        }
        if self.vol_regimes.iter().any(|r| !(r.multiplier > 0.0 && r.multiplier.is_finite())) {
            return bad("regime multipliers must be positive".into());
        }
        Ok(())
    }

    fn scale_at(&self, t: usize) -> f64 {
        self.vol_regimes
            .iter()
            .filter(|r| r.start <= t)
            .max_by_key(|r| r.start)
            .map_or(1.0, |r| r.multiplier)
            * self.noise_sd
    }
}

fn next_business_day(d: NaiveDate) -> NaiveDate {
    let mut next = d + Days::new(1);
    while matches!(next.weekday(), Weekday::Sat | Weekday::Sun) {
        next = next + Days::new(1);
    }
    next
}

/// The first return is drawn from the stationary distribution of the
/// initial regime.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PriceSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let n_returns = spec.n - 1;
    let mut returns = Vec::with_capacity(n_returns);
    let mut prev = spec.scale_at(0) * draw() / (1.0 - spec.ar_coeff * spec.ar_coeff).sqrt();
    returns.push(prev);
    for t in 1..n_returns {
        prev = spec.ar_coeff * prev + spec.scale_at(t) * draw();
        returns.push(prev);
    }

    let mut closes = Vec::with_capacity(spec.n);
    closes.push(spec.initial_price);
    for r in &returns {
        closes.push(closes[closes.len() - 1] * r.exp());
    }
    let mut dates = Vec::with_capacity(spec.n);
    let mut d = spec.start_date;
    if matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = next_business_day(d);
    }
    for _ in 0..spec.n {
        dates.push(d);
        d = next_business_day(d);
    }
    PriceSeries::new(dates, closes)
}
