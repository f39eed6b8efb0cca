//! Hyperparameter search on the initial training block: expanding
//! time-series cross-validation scored by a univariate TPE sampler.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as NormalDist};

use crate::error::{ForecastError, Result};
use crate::gbt::GbtParams;
use crate::matrix::Matrix;
use crate::model::{ModelFamily, ModelSpec};
use crate::seeding::derive_seed;

pub const WARM_UP_TRIALS: usize = 10;
pub const GOOD_FRACTION: f64 = 0.25;
pub const CANDIDATES: usize = 24;
pub const DEFAULT_TRIALS: usize = 60;
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_SEED: u64 = 42;

/// Parameter values by name. Integer parameters hold whole numbers.
pub type ParamSet = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub scale: Scale,
}

impl ParamRange {
    pub fn new(name: &str, low: f64, high: f64, scale: Scale) -> Self {
        Self {
            name: name.to_string(),
            low,
            high,
            scale,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.low.is_finite()
            && self.high.is_finite()
            && self.low < self.high
            && (self.scale != Scale::Log || self.low > 0.0)
            && (self.scale != Scale::Integer || (self.low.fract() == 0.0 && self.high.fract() == 0.0));
        if ok {
            Ok(())
        } else {
            Err(ForecastError::InvalidParameter(format!(
                "bad search range for {}: [{}, {}] ({:?})",
                self.name, self.low, self.high, self.scale
            )))
        }
    }

    /// Bounds in the space where sampling happens (log for `Log`).
    fn internal_bounds(&self) -> (f64, f64) {
        match self.scale {
            Scale::Log => (self.low.ln(), self.high.ln()),
            Scale::Linear => (self.low, self.high),
            Scale::Integer => (self.low - 0.5, self.high + 0.5),
        }
    }

    fn to_internal(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Log => v.ln(),
            _ => v,
        }
    }

    fn from_internal(&self, u: f64) -> f64 {
        let v = match self.scale {
            Scale::Log => u.exp(),
            Scale::Linear => u,
            Scale::Integer => u.round(),
        };
        v.clamp(self.low, self.high)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.low && v <= self.high && (self.scale != Scale::Integer || v.fract() == 0.0)
    }

    fn midpoint(&self) -> f64 {
        match self.scale {
            Scale::Log => (self.low * self.high).sqrt(),
            Scale::Linear => 0.5 * (self.low + self.high),
            Scale::Integer => (0.5 * (self.low + self.high)).round(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<ParamRange>,
}

impl SearchSpace {
    pub fn gbt() -> Self {
        use Scale::*;
        Self {
            params: vec![
                ParamRange::new("n_estimators", 200.0, 1200.0, Integer),
                ParamRange::new("max_depth", 3.0, 10.0, Integer),
                ParamRange::new("learning_rate", 0.01, 0.3, Log),
                ParamRange::new("subsample", 0.6, 1.0, Linear),
                ParamRange::new("colsample_bytree", 0.6, 1.0, Linear),
                ParamRange::new("gamma", 0.0, 5.0, Linear),
                ParamRange::new("min_child_weight", 1.0, 10.0, Integer),
                ParamRange::new("reg_alpha", 0.0, 1.0, Linear),
                ParamRange::new("reg_lambda", 0.0, 2.0, Linear),
            ],
        }
    }

    pub fn ridge() -> Self {
        Self {
            params: vec![ParamRange::new("alpha", 1e-4, 1e3, Scale::Log)],
        }
    }

    pub fn for_family(family: ModelFamily) -> Result<Self> {
        match family {
            ModelFamily::Gbt => Ok(Self::gbt()),
            ModelFamily::Ridge => Ok(Self::ridge()),
            ModelFamily::Arma => Err(ForecastError::InvalidParameter(
                "ARMA orders are selected by AIC, not by the sampler".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(ForecastError::InvalidParameter("empty search space".into()));
        }
        self.params.iter().try_for_each(ParamRange::validate)
    }

    /// Geometric midpoint on log scales, arithmetic otherwise.
    pub fn midpoint(&self) -> ParamSet {
        self.params.iter().map(|r| (r.name.clone(), r.midpoint())).collect()
    }

    pub fn contains(&self, params: &ParamSet) -> bool {
        self.params.len() == params.len()
            && self.params.iter().all(|r| params.get(&r.name).is_some_and(|&v| r.contains(v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    #[default]
    Tpe,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    /// Seed of the sampler draw that produced `params`.
    pub seed: u64,
    pub params: ParamSet,
    /// Validation RMSE per fold, in fold order.
    pub fold_scores: Vec<f64>,
    /// Mean of `fold_scores`; `None` when the trial failed.
    pub cv_score: Option<f64>,
    pub error: Option<String>,
}

/// Expanding folds over `n` rows: `k + 1` equal chunks with the remainder
/// added to the first; fold `i` trains on chunks `0..=i` and validates on
/// chunk `i + 1`.
pub fn ts_cv_splits(n: usize, k: usize) -> Result<Vec<(Range<usize>, Range<usize>)>> {
    if k == 0 {
        return Err(ForecastError::InvalidParameter("need at least one fold".into()));
    }
    if n < 2 * (k + 1) {
        return Err(ForecastError::InsufficientData(format!(
            "{k}-fold time-series split needs at least {} rows, got {n}",
            2 * (k + 1)
        )));
    }
    let chunk = n / (k + 1);
    let first = chunk + n % (k + 1);
    Ok((0..k)
        .map(|i| {
            let train_end = first + i * chunk;
            (0..train_end, train_end..train_end + chunk)
        })
        .collect())
}

/// One adaptive Parzen component in sampling space.
struct Kernel {
    mean: f64,
    sd: f64,
}

/// Truncated Gaussian mixture over observed values plus a broad prior
/// component centred on the range.
struct Parzen {
    kernels: Vec<Kernel>,
    low: f64,
    high: f64,
}

impl Parzen {
    fn new(observed: &[f64], low: f64, high: f64) -> Self {
        let width = high - low;
        let prior = 0.5 * (low + high);
        let mut points: Vec<(f64, bool)> = observed.iter().map(|&v| (v, false)).collect();
        points.push((prior, true));
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let min_sd = width / (points.len() as f64).min(100.0);
        let kernels = points
            .iter()
            .enumerate()
            .map(|(i, &(mean, is_prior))| {
                let sd = if is_prior {
                    width
                } else {
                    let left = if i == 0 { mean - low } else { mean - points[i - 1].0 };
                    let right = if i + 1 == points.len() {
                        high - mean
                    } else {
                        points[i + 1].0 - mean
                    };
                    left.max(right).clamp(min_sd, width)
                };
                Kernel { mean, sd }
            })
            .collect();
        Self { kernels, low, high }
    }

    fn density(&self, x: f64) -> f64 {
        let total: f64 = self
            .kernels
            .iter()
            .map(|k| {
                let d = NormalDist::new(k.mean, k.sd).expect("positive sd");
                let mass = d.cdf(self.high) - d.cdf(self.low);
                d.pdf(x) / mass.max(1e-300)
            })
            .sum();
        total / self.kernels.len() as f64
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let k = &self.kernels[rng.random_range(0..self.kernels.len())];
        let normal = Normal::new(k.mean, k.sd).expect("positive sd");
        for _ in 0..64 {
            let x = normal.sample(rng);
            if x >= self.low && x <= self.high {
                return x;
            }
        }
        rng.random_range(self.low..=self.high)
    }
}

/// Next parameter set to evaluate. Uniform (log-uniform on log scales) until
/// `WARM_UP_TRIALS` successful trials exist, then a per-parameter density
/// ratio search. The result always lies within the space.
pub fn suggest_params(space: &SearchSpace, history: &[Trial], seed: u64, sampler: Sampler) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scored: Vec<&Trial> = history.iter().filter(|t| t.cv_score.is_some()).collect();
    let uniform = sampler == Sampler::Random || scored.len() < WARM_UP_TRIALS;
    if uniform {
        return space
            .params
            .iter()
            .map(|r| {
                let (lo, hi) = r.internal_bounds();
                (r.name.clone(), r.from_internal(rng.random_range(lo..hi)))
            })
            .collect();
    }

    scored.sort_by(|a, b| {
        a.cv_score
            .unwrap()
            .total_cmp(&b.cv_score.unwrap())
            .then(a.index.cmp(&b.index))
    });
    let n_good = ((GOOD_FRACTION * scored.len() as f64).ceil() as usize).max(1);
    let (good, bad) = scored.split_at(n_good);
    space
        .params
        .iter()
        .map(|r| {
            let (lo, hi) = r.internal_bounds();
            let values = |set: &[&Trial]| -> Vec<f64> {
                set.iter().filter_map(|t| t.params.get(&r.name)).map(|&v| r.to_internal(v)).collect()
            };
            let l = Parzen::new(&values(good), lo, hi);
            let g = Parzen::new(&values(bad), lo, hi);
            let best = (0..CANDIDATES)
                .map(|_| l.sample(&mut rng))
                .map(|x| (x, l.density(x).ln() - g.density(x).ln()))
                .fold((f64::NAN, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
            let x = if best.0.is_finite() { best.0 } else { 0.5 * (lo + hi) };
            (r.name.clone(), r.from_internal(x))
        })
        .collect()
}

/// Builds a model spec from sampled values; missing GBT fields keep their
/// defaults and `seed` is the boosting seed.
pub fn spec_from_params(family: ModelFamily, params: &ParamSet, seed: u64) -> Result<ModelSpec> {
    let get = |name: &str| {
        params
            .get(name)
            .copied()
            .ok_or_else(|| ForecastError::InvalidParameter(format!("missing parameter {name}")))
    };
    match family {
        ModelFamily::Ridge => Ok(ModelSpec::Ridge { alpha: get("alpha")? }),
        ModelFamily::Gbt => {
            let mut p = GbtParams {
                seed,
                ..GbtParams::default()
            };
            for (name, &v) in params {
                match name.as_str() {
                    "n_estimators" => p.n_estimators = v as usize,
                    "max_depth" => p.max_depth = v as usize,
                    "learning_rate" => p.learning_rate = v,
                    "subsample" => p.subsample = v,
                    "colsample_bytree" => p.colsample_bytree = v,
                    "gamma" => p.gamma = v,
                    "min_child_weight" => p.min_child_weight = v,
                    "reg_alpha" => p.reg_alpha = v,
                    "reg_lambda" => p.reg_lambda = v,
                    other => {
                        return Err(ForecastError::InvalidParameter(format!(
                            "unknown GBT parameter {other}"
                        )))
                    }
                }
            }
            p.validate()?;
            Ok(ModelSpec::Gbt(p))
        }
        ModelFamily::Arma => Ok(ModelSpec::Arma {
            p: get("p")? as usize,
            q: get("q")? as usize,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSettings {
    pub trials: usize,
    pub folds: usize,
    pub seed: u64,
    pub sampler: Sampler,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            folds: DEFAULT_FOLDS,
            seed: DEFAULT_SEED,
            sampler: Sampler::Tpe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub family: ModelFamily,
    pub best_index: usize,
    pub best_params: ParamSet,
    pub best_spec: ModelSpec,
    pub trials: Vec<Trial>,
}

fn rmse(actual: &[f64], predicted: &[f64]) -> f64 {
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    (sse / actual.len() as f64).sqrt()
}

/// Validation RMSE of `spec` on each fold.
pub fn cv_scores(x: &Matrix, y: &[f64], spec: &ModelSpec, folds: &[(Range<usize>, Range<usize>)]) -> Result<Vec<f64>> {
    folds
        .par_iter()
        .map(|(train, valid)| {
            let pred = spec.fit_predict(
                &x.slice_rows(train.start, train.end),
                &y[train.clone()],
                &x.slice_rows(valid.start, valid.end),
            )?;
            let score = rmse(&y[valid.clone()], &pred);
            if score.is_finite() {
                Ok(score)
            } else {
                Err(ForecastError::NonFinite {
                    what: "validation RMSE",
                    index: valid.start,
                })
            }
        })
        .collect()
}

/// Runs `settings.trials` trials on `(x, y)`, which must be the initial
/// training block only. Trial 0 evaluates the midpoint of the space; failed
/// trials are logged and excluded from the minimum.
pub fn tune(x: &Matrix, y: &[f64], family: ModelFamily, space: &SearchSpace, settings: &TuneSettings) -> Result<TuneOutcome> {
    space.validate()?;
    if settings.trials == 0 {
        return Err(ForecastError::InvalidParameter("need at least one trial".into()));
    }
    if x.n_rows() != y.len() {
        return Err(ForecastError::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    let folds = ts_cv_splits(y.len(), settings.folds)?;
    let mut trials: Vec<Trial> = Vec::with_capacity(settings.trials);
    for index in 0..settings.trials {
        let seed = derive_seed(settings.seed, index as u64);
        let params = if index == 0 {
            space.midpoint()
        } else {
            suggest_params(space, &trials, seed, settings.sampler)
        };
        let outcome = spec_from_params(family, &params, settings.seed)
            .and_then(|spec| cv_scores(x, y, &spec, &folds));
        let (fold_scores, cv_score, error) = match outcome {
            Ok(scores) => {
                let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                (scores, Some(mean), None)
            }
            Err(e) => (Vec::new(), None, Some(e.to_string())),
        };
        trials.push(Trial {
            index,
            seed,
            params,
            fold_scores,
            cv_score,
            error,
        });
    }
    let best = trials
        .iter()
        .filter_map(|t| t.cv_score.map(|s| (t, s)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.index.cmp(&b.0.index)))
        .map(|(t, _)| t)
        .ok_or_else(|| ForecastError::NonConvergence("every tuning trial failed".into()))?;
    let best_spec = spec_from_params(family, &best.params, settings.seed)?;
    Ok(TuneOutcome {
        family,
        best_index: best.index,
        best_params: best.params.clone(),
        best_spec,
        trials,
    })
}
