use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::experiment::{Comparisons, Computed, ExperimentResults, FeatureGain, RunKey, RunOutcome, TuningRecord, SCHEMA_VERSION};
use crate::baselines::AdfResult;
use crate::error::Result;
use crate::evaluation::{MetricReport, Metrics};
use crate::model::ModelFamily;
use crate::walkforward::{RunManifest, StepFailure};

const SCHEMA_LINE: &str = "# schema_version=1";

#[derive(Serialize)]
struct RunSummary<'a> {
    key: &'a RunKey,
    spec: &'a crate::model::ModelSpec,
    steps: usize,
    constant_fallbacks: usize,
    failures: &'a [StepFailure],
    metrics: &'a Computed<MetricReport>,
    importance: &'a Option<Vec<FeatureGain>>,
}

#[derive(Serialize)]
struct ResultsFile<'a> {
    schema_version: u32,
    manifest: &'a RunManifest,
    config: &'a super::config::ExperimentConfig,
    data: &'a super::experiment::DataSummary,
    adf: &'a Computed<AdfResult>,
    tuning: Vec<TuningSummary<'a>>,
    runs: Vec<RunSummary<'a>>,
    comparisons: &'a Option<Comparisons>,
}

#[derive(Serialize)]
struct TuningSummary<'a> {
    family: ModelFamily,
    lag_count: Option<usize>,
    source: &'a super::experiment::ParamSource,
    spec: &'a crate::model::ModelSpec,
    best_trial: Option<usize>,
    trials: usize,
}

#[derive(Serialize)]
struct TestsFile<'a> {
    schema_version: u32,
    manifest: &'a RunManifest,
    adf: &'a Computed<AdfResult>,
    comparisons: &'a Option<Comparisons>,
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.digits$}"))
}

fn csv_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn metric_cells(m: Option<&Metrics>, digits: usize) -> [String; 3] {
    match m {
        Some(m) => [format!("{:.digits$}", m.rmse), format!("{:.digits$}", m.mae), fmt_opt(m.r2, 4)],
        None => ["NA".into(), "NA".into(), "NA".into()],
    }
}

fn render_table(title: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = format!("{SCHEMA_LINE}\n{title}\n");
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    out.push_str(&line(&header));
    out.push('\n');
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn render_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?)
        .expect("csv output is utf-8");
    Ok(format!("{SCHEMA_LINE}\n{body}"))
}

fn key_cells(key: &RunKey) -> [String; 3] {
    [key.family.label().to_string(), key.window_label().to_string(), key.lags_label()]
}

const TABLE1_HEADER: [&str; 7] = ["Model", "Window", "Lags", "RMSE", "MAE", "R2", "DA(%)"];
const TABLE2_HEADER: [&str; 6] = ["Model", "Window", "Lags", "RMSE", "MAE", "R2"];

/// Return-scale metrics for every run, sorted by model, window and lags.
pub fn table1(results: &ExperimentResults) -> (String, String) {
    let text_rows: Vec<Vec<String>> = results
        .runs
        .iter()
        .map(|r| {
            let m = r.metrics.value();
            let mut row = key_cells(&r.key).to_vec();
            row.extend(metric_cells(m.map(|m| &m.returns), 6));
            row.push(fmt_opt(m.map(|m| m.directional_accuracy), 2));
            row
        })
        .collect();
    let csv_rows: Vec<Vec<String>> = results
        .runs
        .iter()
        .map(|r| {
            let m = r.metrics.value();
            let mut row = key_cells(&r.key).to_vec();
            row.push(csv_opt(m.map(|m| m.returns.rmse)));
            row.push(csv_opt(m.map(|m| m.returns.mae)));
            row.push(csv_opt(m.and_then(|m| m.returns.r2)));
            row.push(csv_opt(m.map(|m| m.directional_accuracy)));
            row
        })
        .collect();
    (
        render_table("Return forecasts", &TABLE1_HEADER, &text_rows),
        render_csv(&TABLE1_HEADER, &csv_rows).expect("in-memory csv"),
    )
}

/// Best run of each family by return RMSE, ties to table order.
pub fn best_runs(results: &ExperimentResults) -> Vec<&RunOutcome> {
    let mut best: Vec<&RunOutcome> = Vec::new();
    for family in [ModelFamily::Gbt, ModelFamily::Ridge, ModelFamily::Arma] {
        let candidate = results
            .runs
            .iter()
            .filter(|r| r.key.family == family)
            .filter_map(|r| r.metrics.value().map(|m| (r, m.returns.rmse)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.key.cmp(&b.0.key)));
        if let Some((r, _)) = candidate {
            best.push(r);
        }
    }
    best
}

/// Price-scale metrics of the best run per family.
pub fn table2(results: &ExperimentResults) -> (String, String) {
    let best = best_runs(results);
    let text_rows: Vec<Vec<String>> = best
        .iter()
        .map(|r| {
            let mut row = key_cells(&r.key).to_vec();
            row.extend(metric_cells(r.metrics.value().map(|m| &m.prices), 2));
            row
        })
        .collect();
    let csv_rows: Vec<Vec<String>> = best
        .iter()
        .map(|r| {
            let m = r.metrics.value();
            let mut row = key_cells(&r.key).to_vec();
            row.push(csv_opt(m.map(|m| m.prices.rmse)));
            row.push(csv_opt(m.map(|m| m.prices.mae)));
            row.push(csv_opt(m.and_then(|m| m.prices.r2)));
            row
        })
        .collect();
    (
        render_table("Price forecasts, best run per model", &TABLE2_HEADER, &text_rows),
        render_csv(&TABLE2_HEADER, &csv_rows).expect("in-memory csv"),
    )
}

fn predictions_csv(run: &RunOutcome) -> Result<String> {
    let header = [
        "step",
        "date",
        "actual_return",
        "predicted_return",
        "prior_price",
        "actual_price",
        "predicted_price",
        "window_start",
        "window_end",
        "constant_fallback",
    ];
    let rows: Vec<Vec<String>> = run
        .result
        .records
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                r.date.to_string(),
                r.actual_return.to_string(),
                r.predicted_return.to_string(),
                r.prior_price.to_string(),
                r.actual_price.to_string(),
                r.predicted_price.to_string(),
                r.window_start.to_string(),
                r.window_end.to_string(),
                r.constant_fallback.to_string(),
            ]
        })
        .collect();
    render_csv(&header, &rows)
}

fn price_plot_csv(run: &RunOutcome, last_days: usize) -> Result<String> {
    let records = &run.result.records;
    let from = records.len().saturating_sub(last_days);
    let rows: Vec<Vec<String>> = records[from..]
        .iter()
        .map(|r| vec![r.date.to_string(), r.actual_price.to_string(), r.predicted_price.to_string()])
        .collect();
    render_csv(&["date", "actual_price", "predicted_price"], &rows)
}

fn importance_csv(gains: &[FeatureGain]) -> Result<String> {
    let rows: Vec<Vec<String>> = gains
        .iter()
        .enumerate()
        .map(|(i, g)| vec![(i + 1).to_string(), g.feature.clone(), g.gain.to_string(), g.share.to_string()])
        .collect();
    render_csv(&["rank", "feature", "gain", "share"], &rows)
}

fn trials_csv(record: &TuningRecord) -> Result<Option<String>> {
    let Some(outcome) = &record.outcome else { return Ok(None) };
    let names: Vec<&String> = outcome.trials.first().map(|t| t.params.keys().collect()).unwrap_or_default();
    let folds = outcome.trials.iter().map(|t| t.fold_scores.len()).max().unwrap_or(0);
    let mut header: Vec<String> = vec!["trial".into(), "seed".into()];
    header.extend(names.iter().map(|n| n.to_string()));
    header.extend((1..=folds).map(|k| format!("fold_{k}")));
    header.extend(["cv_score".to_string(), "error".to_string()]);
    let rows: Vec<Vec<String>> = outcome
        .trials
        .iter()
        .map(|t| {
            let mut row = vec![t.index.to_string(), t.seed.to_string()];
            row.extend(names.iter().map(|n| t.params.get(*n).map_or_else(String::new, |v| v.to_string())));
            row.extend((0..folds).map(|k| t.fold_scores.get(k).map_or_else(String::new, |v| v.to_string())));
            row.push(t.cv_score.map_or_else(String::new, |v| v.to_string()));
            row.push(t.error.clone().unwrap_or_default());
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    Ok(Some(render_csv(&header, &rows)?))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Human-readable summary printed by the command-line tool.
pub fn summary_text(results: &ExperimentResults) -> String {
    let mut out = table1(results).0;
    out.push('\n');
    out.push_str(&table2(results).0);
    if let Some(c) = &results.comparisons {
        let _ = writeln!(out, "\nPrimary run: {}", c.primary);
        for dm in &c.dm {
            match dm.test.value() {
                Some(t) => {
                    let _ = writeln!(
                        out,
                        "DM vs {}: statistic {}, p-value {} over {} dates",
                        dm.benchmark,
                        fmt_opt(t.statistic(), 4),
                        fmt_opt(t.p_value(), 4),
                        dm.n_aligned
                    );
                }
                None => {
                    let _ = writeln!(out, "DM vs {}: unavailable", dm.benchmark);
                }
            }
        }
        if let Some(b) = c.binomial.value() {
            let _ = writeln!(out, "Sign test: {}/{} hits, p-value {:.4}", b.k, b.n, b.p_value);
        }
        if let Some(ci) = c.r2_ci.value() {
            let _ = writeln!(out, "R2 95% interval: [{:.4}, {:.4}]", ci.lower, ci.upper);
        }
    }
    out
}

/// Writes every artifact of a finished experiment under `dir` and returns
/// the paths written. Output depends only on `results`.
pub fn emit_report(results: &ExperimentResults, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let summary = ResultsFile {
        schema_version: SCHEMA_VERSION,
        manifest: &results.manifest,
        config: &results.config,
        data: &results.data,
        adf: &results.adf,
        tuning: results
            .tuning
            .iter()
            .map(|t| TuningSummary {
                family: t.family,
                lag_count: t.lag_count,
                source: &t.source,
                spec: &t.spec,
                best_trial: t.outcome.as_ref().map(|o| o.best_index),
                trials: t.outcome.as_ref().map_or(0, |o| o.trials.len()),
            })
            .collect(),
        runs: results
            .runs
            .iter()
            .map(|r| RunSummary {
                key: &r.key,
                spec: &r.result.spec,
                steps: r.result.records.len(),
                constant_fallbacks: r.result.records.iter().filter(|s| s.constant_fallback).count(),
                failures: &r.result.failures,
                metrics: &r.metrics,
                importance: &r.importance,
            })
            .collect(),
        comparisons: &results.comparisons,
    };
    files.push(("results.json".into(), json(&summary)?));
    files.push((
        "tests.json".into(),
        json(&TestsFile {
            schema_version: SCHEMA_VERSION,
            manifest: &results.manifest,
            adf: &results.adf,
            comparisons: &results.comparisons,
        })?,
    ));
    let (t1_text, t1_csv) = table1(results);
    let (t2_text, t2_csv) = table2(results);
    files.push(("table1.txt".into(), t1_text));
    files.push(("table1.csv".into(), t1_csv));
    files.push(("table2.txt".into(), t2_text));
    files.push(("table2.csv".into(), t2_csv));
    for run in &results.runs {
        files.push((Path::new("predictions").join(format!("{}.csv", run.key.slug())), predictions_csv(run)?));
    }
    for record in &results.tuning {
        if let Some(text) = trials_csv(record)? {
            let family = record.family.to_string().to_lowercase();
            let name = match record.lag_count {
                Some(l) => format!("{family}_{l}.csv"),
                None => format!("{family}.csv"),
            };
            files.push((Path::new("trials").join(name), text));
        }
    }
    if let Some(primary) = results.comparisons.as_ref().and_then(|c| results.run(&c.primary)) {
        files.push(("price_plot.csv".into(), price_plot_csv(primary, results.config.plot_last_days)?));
        if let Some(gains) = &primary.importance {
            files.push(("importance.csv".into(), importance_csv(gains)?));
        }
    }

    let mut written = Vec::with_capacity(files.len());
    for (relative, content) in files {
        let path = dir.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}
