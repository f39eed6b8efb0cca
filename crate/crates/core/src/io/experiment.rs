use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, SchemeKind};
use super::ingest::{data_fingerprint, ingest_csv};
use super::synthetic::generate_synthetic;
use crate::baselines::{adf_test, aic_order_search, fit_arma, AdfResult};
use crate::error::{ForecastError, Result};
use crate::evaluation::{bootstrap_r2_ci, dm_test, metric_report, pt_test, sign_hits, BinomialReport, DmTest, MetricReport, PtTest, R2Interval};
use crate::features::{assemble_design_matrix, DesignMatrix, FeatureSpec};
use crate::gbt::{fit_gbt, gain_importance};
use crate::model::{ModelFamily, ModelSpec};
use crate::series::{chronological_split, log_returns, PriceSeries, ReturnSeries, SplitIndex};
use crate::tuning::{tune, SearchSpace, TuneOutcome};
use crate::walkforward::{walk_forward_run, RunManifest, WalkForwardInput, WalkForwardResult};

pub const SCHEMA_VERSION: u32 = 1;

/// A value that could be computed, or the reason it could not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Computed<T> {
    Ok { value: T },
    Unavailable { reason: String },
}

impl<T> Computed<T> {
    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(value) => Computed::Ok { value },
            Err(e) => Computed::Unavailable { reason: e.to_string() },
        }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Computed::Ok { value } => Some(value),
            Computed::Unavailable { .. } => None,
        }
    }
}

/// Identity of one row of the results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub family: ModelFamily,
    pub scheme: SchemeKind,
    /// `None` for ARMA, which does not use the feature matrix.
    pub lag_count: Option<usize>,
}

impl RunKey {
    pub fn window_label(&self) -> &'static str {
        match self.scheme {
            SchemeKind::Expanding => "Expanding",
            SchemeKind::Rolling => "Rolling",
        }
    }

    pub fn lags_label(&self) -> String {
        self.lag_count.map_or_else(|| "-".to_string(), |l| l.to_string())
    }

    /// File-name stem such as `gbt_expanding_20`.
    pub fn slug(&self) -> String {
        let family = match self.family {
            ModelFamily::Gbt => "gbt",
            ModelFamily::Ridge => "ridge",
            ModelFamily::Arma => "arima",
        };
        let scheme = match self.scheme {
            SchemeKind::Expanding => "expanding",
            SchemeKind::Rolling => "rolling",
        };
        match self.lag_count {
            Some(l) => format!("{family}_{scheme}_{l}"),
            None => format!("{family}_{scheme}"),
        }
    }
}

impl std::fmt::Display for RunKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let window = match self.scheme {
            SchemeKind::Expanding => "Exp.",
            SchemeKind::Rolling => "Roll.",
        };
        match self.lag_count {
            Some(l) => write!(f, "{} ({window}, {l})", self.family),
            None => write!(f, "{} ({window})", self.family),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamSource {
    Tuned,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub family: ModelFamily,
    pub lag_count: Option<usize>,
    pub source: ParamSource,
    pub spec: ModelSpec,
    /// Full trial log when the parameters were tuned.
    pub outcome: Option<TuneOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGain {
    pub feature: String,
    pub gain: f64,
    /// Fraction of the total gain; 0 when no split was made.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub key: RunKey,
    pub result: WalkForwardResult,
    pub metrics: Computed<MetricReport>,
    /// Gain importance of the model fitted on the final step's window.
    pub importance: Option<Vec<FeatureGain>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmComparison {
    pub benchmark: RunKey,
    /// Forecast dates shared by both runs.
    pub n_aligned: usize,
    pub test: Computed<DmTest>,
}

/// Significance tests of the best primary-model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparisons {
    pub primary: RunKey,
    pub dm: Vec<DmComparison>,
    pub pt: Computed<PtTest>,
    pub binomial: Computed<BinomialReport>,
    pub r2_ci: Computed<R2Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_prices: usize,
    pub n_returns: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub schema_version: u32,
    pub manifest: RunManifest,
    pub config: ExperimentConfig,
    pub data: DataSummary,
    pub adf: Computed<AdfResult>,
    pub tuning: Vec<TuningRecord>,
    /// Runs sorted by model, window and lag count.
    pub runs: Vec<RunOutcome>,
    pub comparisons: Option<Comparisons>,
}

impl ExperimentResults {
    pub fn run(&self, key: &RunKey) -> Option<&RunOutcome> {
        self.runs.iter().find(|r| &r.key == key)
    }
}

pub fn load_prices(config: &ExperimentConfig) -> Result<PriceSeries> {
    match &config.data {
        DataSource::Csv { path, options } => ingest_csv(path, options),
        DataSource::Synthetic(spec) => generate_synthetic(spec),
    }
}

struct LagSetup {
    lag_count: usize,
    design: DesignMatrix,
    split: SplitIndex,
}

fn prepare_lags(returns: &ReturnSeries, config: &ExperimentConfig) -> Result<Vec<LagSetup>> {
    config
        .lags
        .iter()
        .map(|&lag_count| {
            let design = assemble_design_matrix(returns, &FeatureSpec::with_lags(lag_count))?;
            let split = chronological_split(design.n_rows(), config.test_fraction)?;
            Ok(LagSetup {
                lag_count,
                design,
                split,
            })
        })
        .collect()
}

/// Chooses hyperparameters for one family and lag configuration from the
/// initial training rows only.
fn choose_params(family: ModelFamily, setup: &LagSetup, returns: &ReturnSeries, config: &ExperimentConfig) -> Result<TuningRecord> {
    let fixed = |spec: ModelSpec| TuningRecord {
        family,
        lag_count: Some(setup.lag_count),
        source: ParamSource::Fixed,
        spec,
        outcome: None,
    };
    match family {
        ModelFamily::Gbt | ModelFamily::Ridge => {
            if let (ModelFamily::Gbt, Some(p)) = (family, &config.fixed.gbt) {
                return Ok(fixed(ModelSpec::Gbt(p.clone())));
            }
            if let (ModelFamily::Ridge, Some(alpha)) = (family, config.fixed.ridge_alpha) {
                return Ok(fixed(ModelSpec::Ridge { alpha }));
            }
            let train = setup.split.train_end;
            let x = setup.design.features.slice_rows(0, train);
            let y = &setup.design.targets[..train];
            let mut outcome = tune(&x, y, family, &SearchSpace::for_family(family)?, &config.tune_settings())?;
            if let ModelSpec::Gbt(p) = &mut outcome.best_spec {
                p.split_mode = config.split_mode;
            }
            Ok(TuningRecord {
                family,
                lag_count: Some(setup.lag_count),
                source: ParamSource::Tuned,
                spec: outcome.best_spec.clone(),
                outcome: Some(outcome),
            })
        }
        ModelFamily::Arma => {
            let mut record = if config.reselect_arma_order {
                fixed(ModelSpec::ArmaSearch {
                    max_p: config.max_arma_order,
                    max_q: config.max_arma_order,
                })
            } else if let Some((p, q)) = config.fixed.arma_order {
                fixed(ModelSpec::Arma { p, q })
            } else {
                let history = &returns.values()[..setup.design.return_index[setup.split.train_end]];
                let model = aic_order_search(history, config.max_arma_order, config.max_arma_order)?;
                TuningRecord {
                    family,
                    lag_count: None,
                    source: ParamSource::Tuned,
                    spec: ModelSpec::Arma { p: model.p, q: model.q },
                    outcome: None,
                }
            };
            record.lag_count = None;
            Ok(record)
        }
    }
}

fn importance_of(outcome: &WalkForwardResult, setup: &LagSetup, top: usize) -> Option<Vec<FeatureGain>> {
    let ModelSpec::Gbt(params) = &outcome.spec else { return None };
    let last = outcome.records.last()?;
    let x = setup.design.features.slice_rows(last.window_start, last.window_end);
    let model = fit_gbt(&x, &setup.design.targets[last.window_start..last.window_end], params).ok()?;
    let ranked = gain_importance(&model, &setup.design.feature_names);
    let total: f64 = ranked.iter().map(|(_, g)| g).sum();
    Some(
        ranked
            .into_iter()
            .take(top)
            .map(|(feature, gain)| FeatureGain {
                feature,
                share: if total > 0.0 { gain / total } else { 0.0 },
                gain,
            })
            .collect(),
    )
}

fn evaluate_run(result: &WalkForwardResult) -> Computed<MetricReport> {
    Computed::from_result(metric_report(
        &result.actual_returns(),
        &result.predicted_returns(),
        &result.actual_prices(),
        &result.predicted_prices(),
    ))
}

fn return_rmse(run: &RunOutcome) -> Option<f64> {
    run.metrics.value().map(|m| m.returns.rmse)
}

fn best_of<'a>(runs: impl Iterator<Item = &'a RunOutcome>) -> Option<&'a RunOutcome> {
    runs.filter(|r| return_rmse(r).is_some())
        .min_by(|a, b| return_rmse(a).unwrap().total_cmp(&return_rmse(b).unwrap()).then(a.key.cmp(&b.key)))
}

fn errors_by_date(run: &RunOutcome) -> BTreeMap<NaiveDate, f64> {
    run.result
        .records
        .iter()
        .map(|r| (r.date, r.actual_return - r.predicted_return))
        .collect()
}

fn compare(runs: &[RunOutcome], config: &ExperimentConfig) -> Option<Comparisons> {
    let primary = best_of(runs.iter().filter(|r| r.key.family == ModelFamily::Gbt)).or_else(|| best_of(runs.iter()))?;
    let primary_errors = errors_by_date(primary);
    let mut dm = Vec::new();
    for family in [ModelFamily::Gbt, ModelFamily::Ridge, ModelFamily::Arma] {
        if family == primary.key.family {
            continue;
        }
        let Some(bench) = best_of(runs.iter().filter(|r| r.key.family == family)) else { continue };
        let bench_errors = errors_by_date(bench);
        let (a, b): (Vec<f64>, Vec<f64>) = primary_errors
            .iter()
            .filter_map(|(d, e)| bench_errors.get(d).map(|be| (*e, *be)))
            .unzip();
        dm.push(DmComparison {
            benchmark: bench.key,
            n_aligned: a.len(),
            test: Computed::from_result(dm_test(&a, &b, config.harvey_correction)),
        });
    }
    let actual = primary.result.actual_returns();
    let predicted = primary.result.predicted_returns();
    Some(Comparisons {
        primary: primary.key,
        dm,
        pt: Computed::from_result(pt_test(&actual, &predicted)),
        binomial: Computed::from_result(sign_hits(&actual, &predicted)),
        r2_ci: Computed::from_result(bootstrap_r2_ci(&actual, &predicted, config.bootstrap_resamples, config.seed)),
    })
}

/// Full pipeline: load, transform, tune on the training block, walk forward
/// over every (model, window, lags) combination, and evaluate. Any stage
/// error aborts with the stage name attached.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate().map_err(|e| e.at_stage("config"))?;
    let prices = load_prices(config).map_err(|e| e.at_stage("ingest"))?;
    let returns = log_returns(&prices).map_err(|e| e.at_stage("returns"))?;
    let manifest = RunManifest {
        config_hash: config.hash()?,
        seed: config.seed,
        data_fingerprint: data_fingerprint(&prices),
    };
    let setups = prepare_lags(&returns, config).map_err(|e| e.at_stage("features"))?;

    let mut families = config.families.clone();
    families.sort();
    families.dedup();
    let mut schemes = config.schemes.clone();
    schemes.sort();
    schemes.dedup();

    // (family, lag setup index) pairs in table order
    let mut tuning_jobs: Vec<(ModelFamily, usize)> = Vec::new();
    for &family in &families {
        if family == ModelFamily::Arma {
            tuning_jobs.push((family, 0));
        } else {
            let mut order: Vec<usize> = (0..setups.len()).collect();
            order.sort_by_key(|&i| setups[i].lag_count);
            order.dedup_by_key(|i| setups[*i].lag_count);
            tuning_jobs.extend(order.into_iter().map(|i| (family, i)));
        }
    }
    let tuning: Vec<TuningRecord> = tuning_jobs
        .iter()
        .map(|&(family, i)| choose_params(family, &setups[i], &returns, config))
        .collect::<Result<_>>()
        .map_err(|e| e.at_stage("tuning"))?;

    let jobs: Vec<(usize, SchemeKind)> = (0..tuning_jobs.len())
        .flat_map(|t| schemes.iter().map(move |&s| (t, s)))
        .collect();
    let mut runs: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(t, scheme)| {
            let (family, setup_index) = tuning_jobs[t];
            let setup = &setups[setup_index];
            let record = &tuning[t];
            let input = WalkForwardInput {
                prices: &prices,
                returns: &returns,
                design: &setup.design,
                split: setup.split,
                lag_count: setup.lag_count,
            };
            let result = walk_forward_run(&input, &record.spec, config.scheme(scheme), manifest.clone())?;
            let key = RunKey {
                family,
                scheme,
                lag_count: record.lag_count,
            };
            Ok(RunOutcome {
                key,
                metrics: evaluate_run(&result),
                importance: importance_of(&result, setup, config.top_features),
                result,
            })
        })
        .collect::<Result<_>>()
        .map_err(|e: ForecastError| e.at_stage("walkforward"))?;
    runs.sort_by_key(|r| r.key);

    let adf = Computed::from_result(adf_test(returns.values()));
    let comparisons = compare(&runs, config);
    Ok(ExperimentResults {
        schema_version: SCHEMA_VERSION,
        manifest,
        config: ExperimentConfig {
            output_dir: None,
            ..config.clone()
        },
        data: DataSummary {
            n_prices: prices.len(),
            n_returns: returns.len(),
            first_date: prices.dates()[0],
            last_date: prices.dates()[prices.len() - 1],
        },
        adf,
        tuning,
        runs,
        comparisons,
    })
}

/// Least-squares AR(1) coefficient of a return series; a quick sanity check
/// for synthetic inputs.
pub fn ar1_coefficient(returns: &[f64]) -> Result<f64> {
    Ok(fit_arma(returns, 1, 0)?.ar_coeffs[0])
}
