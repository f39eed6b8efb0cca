//! Forecast accuracy metrics and significance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;

use crate::error::{ensure_finite, ForecastError, Result};
use crate::seeding::derive_seed;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when the actual values have zero variance.
    pub r2: Option<f64>,
    pub n: usize,
}

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(ForecastError::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(ForecastError::InsufficientData("no forecasts to evaluate".into()));
    }
    ensure_finite(actual, "actual values")?;
    ensure_finite(predicted, "predicted values")
}

fn r2_unchecked(actual: &[f64], predicted: &[f64]) -> Option<f64> {
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let sst: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    (sst > 0.0).then(|| 1.0 - sse / sst)
}

pub fn metrics(actual: &[f64], predicted: &[f64]) -> Result<Metrics> {
    check_pair(actual, predicted)?;
    let n = actual.len() as f64;
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    let sae: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum();
    Ok(Metrics {
        rmse: (sse / n).sqrt(),
        mae: sae / n,
        r2: r2_unchecked(actual, predicted),
        n: actual.len(),
    })
}

/// Sign with zero counted as positive.
fn is_up(v: f64) -> bool {
    v >= 0.0
}

/// Percentage of forecasts with the same sign as the outcome.
pub fn directional_accuracy(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let hits = actual.iter().zip(predicted).filter(|(a, p)| is_up(**a) == is_up(**p)).count();
    Ok(100.0 * hits as f64 / actual.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub returns: Metrics,
    pub prices: Metrics,
    pub directional_accuracy: f64,
}

pub fn metric_report(
    actual_returns: &[f64],
    predicted_returns: &[f64],
    actual_prices: &[f64],
    predicted_prices: &[f64],
) -> Result<MetricReport> {
    Ok(MetricReport {
        returns: metrics(actual_returns, predicted_returns)?,
        prices: metrics(actual_prices, predicted_prices)?,
        directional_accuracy: directional_accuracy(actual_returns, predicted_returns)?,
    })
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Diebold-Mariano outcome under squared-error loss at horizon one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DmTest {
    Tested {
        /// Reported statistic, Harvey-corrected when requested.
        statistic: f64,
        uncorrected_statistic: f64,
        /// Two-sided normal p-value of `statistic`.
        p_value: f64,
        /// Mean of `e_a^2 - e_b^2`; negative favours `a`.
        mean_differential: f64,
        n: usize,
        harvey_correction: bool,
    },
    /// The loss differential is constant, so the statistic is undefined.
    Degenerate { mean_differential: f64, n: usize },
}

impl DmTest {
    pub fn statistic(&self) -> Option<f64> {
        match self {
            DmTest::Tested { statistic, .. } => Some(*statistic),
            DmTest::Degenerate { .. } => None,
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        match self {
            DmTest::Tested { p_value, .. } => Some(*p_value),
            DmTest::Degenerate { .. } => None,
        }
    }
}

pub fn dm_test(errors_a: &[f64], errors_b: &[f64], harvey_correction: bool) -> Result<DmTest> {
    check_pair(errors_a, errors_b)?;
    let n = errors_a.len();
    if n < 10 {
        return Err(ForecastError::InsufficientData(format!(
            "Diebold-Mariano test needs at least 10 forecasts, got {n}"
        )));
    }
    let d: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| a * a - b * b).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    if !(var > 0.0) {
        return Ok(DmTest::Degenerate {
            mean_differential: mean,
            n,
        });
    }
    let raw = mean / (var / nf).sqrt();
    // horizon one: sqrt((n + 1 - 2h + h(h - 1)/n) / n) = sqrt((n - 1)/n)
    let statistic = if harvey_correction {
        raw * ((nf - 1.0) / nf).sqrt()
    } else {
        raw
    };
    let p_value = (2.0 * (1.0 - std_normal().cdf(statistic.abs()))).clamp(0.0, 1.0);
    Ok(DmTest::Tested {
        statistic,
        uncorrected_statistic: raw,
        p_value,
        mean_differential: mean,
        n,
        harvey_correction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PtTest {
    Tested {
        statistic: f64,
        /// One-sided: large statistics reject independence.
        p_value: f64,
        hit_rate: f64,
        expected_hit_rate: f64,
        n: usize,
    },
    /// One of the series has a single sign, so the test does not apply.
    Inapplicable { reason: String, n: usize },
}

impl PtTest {
    pub fn statistic(&self) -> Option<f64> {
        match self {
            PtTest::Tested { statistic, .. } => Some(*statistic),
            PtTest::Inapplicable { .. } => None,
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        match self {
            PtTest::Tested { p_value, .. } => Some(*p_value),
            PtTest::Inapplicable { .. } => None,
        }
    }
}

/// Pesaran-Timmermann test of directional predictability.
pub fn pt_test(actual: &[f64], predicted: &[f64]) -> Result<PtTest> {
    check_pair(actual, predicted)?;
    let n = actual.len();
    if n < 20 {
        return Err(ForecastError::InsufficientData(format!(
            "Pesaran-Timmermann test needs at least 20 forecasts, got {n}"
        )));
    }
    let nf = n as f64;
    let frac_up = |v: &[f64]| v.iter().filter(|x| is_up(**x)).count() as f64 / nf;
    let py = frac_up(actual);
    let px = frac_up(predicted);
    let inapplicable = |reason: &str| {
        Ok(PtTest::Inapplicable {
            reason: reason.to_string(),
            n,
        })
    };
    if py == 0.0 || py == 1.0 {
        return inapplicable("actual values all have the same sign");
    }
    if px == 0.0 || px == 1.0 {
        return inapplicable("predictions all have the same sign");
    }
    let hit = actual.iter().zip(predicted).filter(|(a, p)| is_up(**a) == is_up(**p)).count() as f64 / nf;
    let expected = py * px + (1.0 - py) * (1.0 - px);
    let var_hit = expected * (1.0 - expected) / nf;
    let var_expected = (2.0 * py - 1.0).powi(2) * px * (1.0 - px) / nf
        + (2.0 * px - 1.0).powi(2) * py * (1.0 - py) / nf
        + 4.0 * py * px * (1.0 - py) * (1.0 - px) / (nf * nf);
    let denom = var_hit - var_expected;
    if !(denom > 0.0) {
        return inapplicable("non-positive variance of the hit-rate difference");
    }
    let statistic = (hit - expected) / denom.sqrt();
    Ok(PtTest::Tested {
        statistic,
        p_value: (1.0 - std_normal().cdf(statistic)).clamp(0.0, 1.0),
        hit_rate: hit,
        expected_hit_rate: expected,
        n,
    })
}

/// Exact upper-tail probability `P(X >= k)` for `X ~ Binomial(n, p0)`.
pub fn binomial_sign_test(k: usize, n: usize, p0: f64) -> Result<f64> {
    if k > n {
        return Err(ForecastError::InvalidParameter(format!("k = {k} exceeds n = {n}")));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(ForecastError::InvalidParameter(format!("p0 must lie in (0, 1), got {p0}")));
    }
    if n <= 120 {
        // binomial coefficients are exact integers in u128 here
        let mut coef: u128 = 1;
        let mut total = 0.0;
        for i in 0..=n {
            if i > 0 {
                coef = coef * (n - i + 1) as u128 / i as u128;
            }
            if i >= k {
                total += coef as f64 * p0.powi(i as i32) * (1.0 - p0).powi((n - i) as i32);
            }
        }
        return Ok(total.min(1.0));
    }
    let logs: Vec<f64> = (k..=n)
        .map(|i| ln_binomial(n as u64, i as u64) + i as f64 * p0.ln() + (n - i) as f64 * (1.0 - p0).ln())
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((top.exp() * logs.iter().map(|l| (l - top).exp()).sum::<f64>()).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2Interval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub resamples: usize,
    pub seed: u64,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile 95% interval of R^2 over i.i.d. paired resamples.
pub fn bootstrap_r2_ci(actual: &[f64], predicted: &[f64], resamples: usize, seed: u64) -> Result<R2Interval> {
    check_pair(actual, predicted)?;
    let n = actual.len();
    if n < 30 {
        return Err(ForecastError::InsufficientData(format!(
            "bootstrap needs at least 30 forecasts, got {n}"
        )));
    }
    if resamples < 2 {
        return Err(ForecastError::InvalidParameter("need at least 2 resamples".into()));
    }
    let point = r2_unchecked(actual, predicted)
        .ok_or_else(|| ForecastError::Degenerate("actual values have zero variance".into()))?;
    let mut draws: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
            let mut a = vec![0.0; n];
            let mut p = vec![0.0; n];
            for _ in 0..BOOTSTRAP_RETRIES {
                for j in 0..n {
                    let i = rng.random_range(0..n);
                    a[j] = actual[i];
                    p[j] = predicted[i];
                }
                if let Some(r2) = r2_unchecked(&a, &p) {
                    return Ok(r2);
                }
            }
            Err(ForecastError::Degenerate(format!(
                "resample {b} had zero variance in {BOOTSTRAP_RETRIES} draws"
            )))
        })
        .collect::<Result<_>>()?;
    draws.sort_by(f64::total_cmp);
    Ok(R2Interval {
        point,
        lower: quantile(&draws, 0.025),
        upper: quantile(&draws, 0.975),
        resamples,
        seed,
    })
}

/// Significance tests for one forecast run against a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub dm: Option<DmTest>,
    pub pt: PtTest,
    pub binomial: BinomialReport,
    pub r2_ci: R2Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialReport {
    pub k: usize,
    pub n: usize,
    pub p_value: f64,
}

pub fn sign_hits(actual: &[f64], predicted: &[f64]) -> Result<BinomialReport> {
    check_pair(actual, predicted)?;
    let k = actual.iter().zip(predicted).filter(|(a, p)| is_up(**a) == is_up(**p)).count();
    let n = actual.len();
    Ok(BinomialReport {
        k,
        n,
        p_value: binomial_sign_test(k, n, 0.5)?,
    })
}
