//! Leakage-free feature engineering.
//!
//! The column primitives (`make_lags`, `rolling_std`, `rolling_mean`, `rsi`)
//! return one optional value per return observation. Rolling indicators are
//! trailing windows that include the current observation; the assembler shifts
//! them by one so that every feature of the row predicting `r_t` is computed
//! from returns up to `r_{t-1}` only.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{ForecastError, Result};
use crate::matrix::Matrix;
use crate::series::ReturnSeries;

/// A feature column; `None` marks rows without enough history.
pub type Column = Vec<Option<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub lag_count: usize,
    pub vol_windows: Vec<usize>,
    pub mean_window: usize,
    pub rsi_period: usize,
    pub epsilon: f64,
    /// Delta degrees of freedom for rolling volatility (1 = sample std).
    #[serde(default = "default_ddof")]
    pub std_ddof: usize,
}

fn default_ddof() -> usize {
    1
}

impl FeatureSpec {
    pub fn with_lags(lag_count: usize) -> Self {
        Self {
            lag_count,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lag_count == 0 {
            return Err(ForecastError::InvalidParameter("lag count must be >= 1".into()));
        }
        if self.vol_windows.iter().any(|&w| w < 2) || self.mean_window < 2 || self.rsi_period < 2 {
            return Err(ForecastError::InvalidParameter("indicator windows must be >= 2".into()));
        }
        if self.vol_windows.iter().any(|&w| w <= self.std_ddof) {
            return Err(ForecastError::InvalidParameter(
                "volatility windows must exceed the std ddof".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(ForecastError::InvalidParameter("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Number of leading return observations that cannot serve as targets.
    pub fn warm_up(&self) -> usize {
        self.vol_windows
            .iter()
            .copied()
            .chain([self.lag_count, self.mean_window, self.rsi_period])
            .max()
            .unwrap_or(0)
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.lag_count).map(|k| format!("lag_{k}")).collect();
        names.extend(self.vol_windows.iter().map(|w| format!("vol_{w}")));
        names.push(format!("rsi_{}", self.rsi_period));
        names.push(format!("mean_{}", self.mean_window));
        names
    }
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            lag_count: 10,
            vol_windows: vec![5, 20],
            mean_window: 10,
            rsi_period: 14,
            epsilon: 1e-8,
            std_ddof: 1,
        }
    }
}

/// Supervised rows: features in fixed column order and the next-step target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub features: Matrix,
    pub targets: Vec<f64>,
    pub feature_names: Vec<String>,
    /// Date of the target observation of each row.
    pub row_dates: Vec<NaiveDate>,
    /// Position of each row's target within the source return series.
    pub return_index: Vec<usize>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

/// `lag_k[t] = r[t - k]` for `k = 1..=lag_count`.
pub fn make_lags(returns: &[f64], lag_count: usize) -> Result<Vec<Column>> {
    if lag_count == 0 {
        return Err(ForecastError::InvalidParameter("lag count must be >= 1".into()));
    }
    if lag_count >= returns.len() {
        return Err(ForecastError::InsufficientData(format!(
            "{lag_count} lags need more than {} returns",
            returns.len()
        )));
    }
    Ok((1..=lag_count)
        .map(|k| {
            (0..returns.len())
                .map(|t| t.checked_sub(k).map(|s| returns[s]))
                .collect()
        })
        .collect())
}

fn check_window(len: usize, window: usize, min: usize) -> Result<()> {
    if window < min {
        return Err(ForecastError::InvalidParameter(format!(
            "window must be >= {min}, got {window}"
        )));
    }
    if window > len {
        return Err(ForecastError::InsufficientData(format!(
            "window {window} exceeds series length {len}"
        )));
    }
    Ok(())
}

fn rolling<F>(values: &[f64], window: usize, stat: F) -> Column
where
    F: Fn(&[f64]) -> f64,
{
    (0..values.len())
        .map(|t| (t + 1 >= window).then(|| stat(&values[t + 1 - window..=t])))
        .collect()
}

/// Trailing standard deviation over `returns[t - window + 1..=t]`.
pub fn rolling_std(returns: &[f64], window: usize, ddof: usize) -> Result<Column> {
    check_window(returns.len(), window, 2)?;
    if ddof >= window {
        return Err(ForecastError::InvalidParameter(format!(
            "ddof {ddof} must be below window {window}"
        )));
    }
    Ok(rolling(returns, window, |w| {
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let ss: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - ddof as f64)).sqrt()
    }))
}

/// Trailing arithmetic mean over `returns[t - window + 1..=t]`.
pub fn rolling_mean(returns: &[f64], window: usize) -> Result<Column> {
    check_window(returns.len(), window, 1)?;
    Ok(rolling(returns, window, |w| w.iter().sum::<f64>() / w.len() as f64))
}

/// Relative strength index of the return stream using simple averages of
/// gains and losses over the trailing `period` observations.
pub fn rsi(returns: &[f64], period: usize, epsilon: f64) -> Result<Column> {
    check_window(returns.len(), period, 1)?;
    Ok(rolling(returns, period, |w| {
        let n = w.len() as f64;
        let gain = w.iter().map(|r| r.max(0.0)).sum::<f64>() / n;
        let loss = w.iter().map(|r| (-r).max(0.0)).sum::<f64>() / n;
        let rs = gain / (loss + epsilon);
        100.0 - 100.0 / (1.0 + rs)
    }))
}

/// Shift a trailing-window column forward one step so row `t` sees `t - 1`.
fn shift_one(col: Column) -> Column {
    let len = col.len();
    std::iter::once(None).chain(col).take(len).collect()
}

pub fn assemble_design_matrix(returns: &ReturnSeries, spec: &FeatureSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    let r = returns.values();
    let n = r.len();
    if n <= spec.warm_up() {
        return Err(ForecastError::InsufficientData(format!(
            "{n} returns leave no complete feature row (warm-up {})",
            spec.warm_up()
        )));
    }

    let mut columns = make_lags(r, spec.lag_count)?;
    for &w in &spec.vol_windows {
        columns.push(shift_one(rolling_std(r, w, spec.std_ddof)?));
    }
    columns.push(shift_one(rsi(r, spec.rsi_period, spec.epsilon)?));
    columns.push(shift_one(rolling_mean(r, spec.mean_window)?));

    let n_cols = columns.len();
    let mut data = Vec::with_capacity(n * n_cols);
    let mut targets = Vec::new();
    let mut row_dates = Vec::new();
    let mut return_index = Vec::new();
    let mut row = Vec::with_capacity(n_cols);
    for t in 0..n {
        row.clear();
        for col in &columns {
            // Infinite or undefined cells count as missing.
            match col[t] {
                Some(v) if v.is_finite() => row.push(v),
                _ => break,
            }
        }
        if row.len() != n_cols || !r[t].is_finite() {
            continue;
        }
        data.extend_from_slice(&row);
        targets.push(r[t]);
        row_dates.push(returns.dates()[t]);
        return_index.push(t);
    }
    if targets.is_empty() {
        return Err(ForecastError::InsufficientData(
            "no complete rows remain after dropping missing values".into(),
        ));
    }
    Ok(DesignMatrix {
        features: Matrix::from_flat(targets.len(), n_cols, data)?,
        targets,
        feature_names: spec.feature_names(),
        row_dates,
        return_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn returns(values: &[f64]) -> ReturnSeries {
        let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        let dates = (0..values.len())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        ReturnSeries::new(dates, values.to_vec()).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.03..0.03)).collect()
    }

    #[test]
    fn lag_shift() {
        let lags = make_lags(&[1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(lags, vec![vec![None, Some(1.0), Some(2.0)]]);
        let lags = make_lags(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(lags[0][3], Some(3.0));
        assert_eq!(lags[1][3], Some(2.0));
        assert_eq!(lags[1][1], None);
        assert!(make_lags(&[1.0, 2.0], 2).is_err());
        assert!(make_lags(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn standard_lag_configurations() {
        let r = noise(100, 1);
        for l in [10, 20, 30] {
            assert_eq!(make_lags(&r, l).unwrap().len(), l);
            let dm = assemble_design_matrix(&returns(&r), &FeatureSpec::with_lags(l)).unwrap();
            assert_eq!(dm.n_features(), l + 4);
        }
    }

    #[test]
    fn rolling_std_textbook() {
        let s = rolling_std(&[1.0, 2.0, 3.0, 4.0, 5.0], 5, 1).unwrap();
        assert_eq!(&s[..4], &[None; 4]);
        assert!((s[4].unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        let c = rolling_std(&[0.3; 8], 5, 1).unwrap();
        assert!(c.iter().flatten().all(|v| *v == 0.0));
        assert!(rolling_std(&[1.0, 2.0], 5, 1).is_err());
        assert!(rolling_std(&[1.0, 2.0], 1, 1).is_err());
    }

    #[test]
    fn rolling_mean_hand() {
        assert_eq!(
            rolling_mean(&[1.0, 3.0, 5.0], 2).unwrap(),
            vec![None, Some(2.0), Some(4.0)]
        );
        assert!(rolling_mean(&[0.25; 12], 10)
            .unwrap()
            .iter()
            .flatten()
            .all(|v| *v == 0.25));
    }

    #[test]
    fn rsi_limits() {
        let up = rsi(&[0.01; 14], 14, 1e-8).unwrap();
        assert!((up[13].unwrap() - 100.0).abs() < 1e-3);
        let down = rsi(&[-0.01; 14], 14, 1e-8).unwrap();
        assert_eq!(down[13], Some(0.0));
        let alt: Vec<f64> = (0..14).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let mid = rsi(&alt, 14, 1e-8).unwrap()[13].unwrap();
        // RS = 0.005 / (0.005 + 1e-8)
        let rs = 0.005 / (0.005 + 1e-8);
        assert!((mid - (100.0 - 100.0 / (1.0 + rs))).abs() < 1e-12);
        assert!((mid - 50.0).abs() < 1e-4);
    }

    #[test]
    fn design_matrix_layout() {
        let r = noise(120, 7);
        let dm = assemble_design_matrix(&returns(&r), &FeatureSpec::with_lags(3)).unwrap();
        let names = dm.feature_names.join(",");
        assert_eq!(names, "lag_1,lag_2,lag_3,vol_5,vol_20,rsi_14,mean_10");
        // warm-up dominated by vol_20
        assert_eq!(dm.n_rows(), 100);
        assert_eq!(dm.return_index[0], 20);
        let first = dm.features.row(0);
        assert_eq!(first[0], r[19]);
        assert_eq!(first[2], r[17]);
        let mean10 = r[10..20].iter().sum::<f64>() / 10.0;
        assert!((first[6] - mean10).abs() < 1e-15);
        assert_eq!(dm.targets[0], r[20]);

        let dm30 = assemble_design_matrix(&returns(&r), &FeatureSpec::with_lags(30)).unwrap();
        assert_eq!(dm30.n_rows(), 90);
        assert!(dm30.features.is_finite());
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(assemble_design_matrix(&returns(&noise(20, 1)), &FeatureSpec::with_lags(3)).is_err());
    }

    proptest! {
        #[test]
        fn rsi_is_bounded(r in prop::collection::vec(-0.2f64..0.2, 14..80)) {
            for v in rsi(&r, 14, 1e-8).unwrap().into_iter().flatten() {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }

        #[test]
        fn future_values_never_leak(seed in 0u64..500, cut in 25usize..150, lags in 1usize..25) {
            let r = noise(160, seed);
            let mut perturbed = r.clone();
            for (i, v) in perturbed.iter_mut().enumerate().skip(cut) {
                *v = 0.05 * ((i * 7919) % 13) as f64 - 0.3;
            }
            let spec = FeatureSpec::with_lags(lags);
            let a = assemble_design_matrix(&returns(&r), &spec).unwrap();
            let b = assemble_design_matrix(&returns(&perturbed), &spec).unwrap();
            prop_assert_eq!(a.n_rows(), r.len() - spec.warm_up());
            prop_assert_eq!(a.n_features(), lags + 4);
            for i in 0..a.n_rows() {
                if a.return_index[i] < cut {
                    prop_assert_eq!(a.features.row(i), b.features.row(i));
                    prop_assert_eq!(a.targets[i], b.targets[i]);
                }
            }
        }
    }
}
