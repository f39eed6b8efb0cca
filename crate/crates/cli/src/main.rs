use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use forecast_core::evaluation::{bootstrap_r2_ci, dm_test, metric_report, pt_test, sign_hits};
use forecast_core::features::{assemble_design_matrix, FeatureSpec};
use forecast_core::gbt::SplitMode;
use forecast_core::io::{
    data_fingerprint, emit_report, generate_synthetic, load_prices, run_experiment, summary_text, write_prices,
    CsvOptions, DataSource, ExperimentConfig, ExperimentResults, SchemeKind, SyntheticSpec,
};
use forecast_core::model::ModelFamily;
use forecast_core::series::{chronological_split, log_returns};
use forecast_core::tuning::{tune, Sampler, SearchSpace};

#[derive(Parser)]
#[command(name = "wfcast", version, about = "Walk-forward forecasting of daily log-returns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a price CSV and print its fingerprint.
    Ingest {
        path: PathBuf,
        #[command(flatten)]
        csv: CsvArgs,
        /// Write the cleaned, date-sorted series here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic AR(1) price series as CSV.
    Synth {
        #[arg(long, default_value_t = 3000)]
        n: usize,
        #[arg(long, default_value_t = 0.3)]
        phi: f64,
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune hyperparameters on the training block and print the trial log.
    Tune {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, default_value = "gbt")]
        family: String,
    },
    /// Run one (model, window, lags) walk-forward and write its report.
    Walkforward {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, default_value = "gbt")]
        family: String,
        #[arg(long, default_value = "expanding")]
        scheme: String,
        #[arg(long, default_value_t = 20)]
        lag: usize,
    },
    /// Metrics and tests for a predictions file written by a run.
    Evaluate {
        predictions: PathBuf,
        /// Second predictions file for the Diebold-Mariano comparison.
        #[arg(long)]
        benchmark: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        no_harvey: bool,
    },
    /// Re-emit report files from a saved result bundle.
    Report {
        bundle: PathBuf,
        #[arg(long, env = "WFCAST_OUTPUT_DIR")]
        output_dir: PathBuf,
    },
    /// Full pipeline over the configured grid.
    Run {
        #[command(flatten)]
        experiment: ExperimentArgs,
    },
}

#[derive(Args, Clone, Default)]
struct CsvArgs {
    #[arg(long)]
    date_column: Option<String>,
    #[arg(long)]
    close_column: Option<String>,
    /// chrono date format; repeatable, tried in order.
    #[arg(long = "date-format")]
    date_formats: Vec<String>,
}

impl CsvArgs {
    fn options(&self) -> CsvOptions {
        let mut opts = CsvOptions {
            date_column: self.date_column.clone(),
            close_column: self.close_column.clone(),
            ..CsvOptions::default()
        };
        if !self.date_formats.is_empty() {
            opts.date_formats = self.date_formats.clone();
        }
        opts
    }
}

/// Flags mirroring `ExperimentConfig`; each overrides the config file value.
#[derive(Args)]
struct ExperimentArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Price CSV; replaces the synthetic data source.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    csv_args: CsvArgs,
    /// Synthetic series length.
    #[arg(long)]
    synthetic_n: Option<usize>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Comma-separated: gbt, ridge, arma.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    lags: Option<Vec<usize>>,
    /// Comma-separated: expanding, rolling.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    rolling_length: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// tpe or random.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exhaustive split search instead of histogram bins.
    #[arg(long)]
    exact_splits: bool,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    ridge_alpha: Option<f64>,
    /// Fixed ARMA order as p,q.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    arma_order: Option<Vec<usize>>,
    #[arg(long)]
    max_arma_order: Option<usize>,
    #[arg(long)]
    reselect_arma_order: bool,
    #[arg(long)]
    no_harvey: bool,
    #[arg(long)]
    bootstrap_resamples: Option<usize>,
    #[arg(long)]
    plot_last_days: Option<usize>,
    #[arg(long)]
    top_features: Option<usize>,
    #[arg(long, env = "WFCAST_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

fn parse_family(name: &str) -> Result<ModelFamily> {
    Ok(match name.trim().to_lowercase().as_str() {
        "gbt" | "xgboost" => ModelFamily::Gbt,
        "ridge" => ModelFamily::Ridge,
        "arma" | "arima" => ModelFamily::Arma,
        other => bail!("unknown model family {other:?}"),
    })
}

fn parse_scheme(name: &str) -> Result<SchemeKind> {
    Ok(match name.trim().to_lowercase().as_str() {
        "expanding" => SchemeKind::Expanding,
        "rolling" => SchemeKind::Rolling,
        other => bail!("unknown window scheme {other:?}"),
    })
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.csv {
            cfg.data = DataSource::Csv {
                path: path.clone(),
                options: self.csv_args.options(),
            };
        }
        if let DataSource::Synthetic(spec) = &mut cfg.data {
            spec.n = self.synthetic_n.unwrap_or(spec.n);
            spec.ar_coeff = self.phi.unwrap_or(spec.ar_coeff);
            spec.noise_sd = self.sigma.unwrap_or(spec.noise_sd);
            spec.seed = self.data_seed.unwrap_or(spec.seed);
        }
        if let Some(f) = &self.families {
            cfg.families = f.iter().map(|s| parse_family(s)).collect::<Result<_>>()?;
        }
        if let Some(l) = &self.lags {
            cfg.lags = l.clone();
        }
        if let Some(s) = &self.schemes {
            cfg.schemes = s.iter().map(|s| parse_scheme(s)).collect::<Result<_>>()?;
        }
        cfg.test_fraction = self.test_fraction.unwrap_or(cfg.test_fraction);
        cfg.rolling_length = self.rolling_length.unwrap_or(cfg.rolling_length);
        cfg.trials = self.trials.unwrap_or(cfg.trials);
        cfg.folds = self.folds.unwrap_or(cfg.folds);
        if let Some(s) = &self.sampler {
            cfg.sampler = match s.to_lowercase().as_str() {
                "tpe" => Sampler::Tpe,
                "random" => Sampler::Random,
                other => bail!("unknown sampler {other:?}"),
            };
        }
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        if self.exact_splits {
            cfg.split_mode = SplitMode::Exact;
        } else if let Some(bins) = self.bins {
            cfg.split_mode = SplitMode::Histogram { bins };
        }
        if let Some(a) = self.ridge_alpha {
            cfg.fixed.ridge_alpha = Some(a);
        }
        if let Some(o) = &self.arma_order {
            cfg.fixed.arma_order = Some((o[0], o[1]));
        }
        cfg.max_arma_order = self.max_arma_order.unwrap_or(cfg.max_arma_order);
        cfg.reselect_arma_order |= self.reselect_arma_order;
        if self.no_harvey {
            cfg.harvey_correction = false;
        }
        cfg.bootstrap_resamples = self.bootstrap_resamples.unwrap_or(cfg.bootstrap_resamples);
        cfg.plot_last_days = self.plot_last_days.unwrap_or(cfg.plot_last_days);
        cfg.top_features = self.top_features.unwrap_or(cfg.top_features);
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = Some(dir.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("wfcast-output"))
}

fn run_and_emit(cfg: &ExperimentConfig) -> Result<()> {
    let results = run_experiment(cfg)?;
    let dir = output_dir(cfg);
    let written = emit_report(&results, &dir)?;
    let bundle = dir.join("bundle.json");
    fs::write(&bundle, serde_json::to_string(&results)?)?;
    print!("{}", summary_text(&results));
    println!("\n{} files written to {}", written.len() + 1, dir.display());
    Ok(())
}

#[derive(Debug, serde::Deserialize)]
struct PredictionRow {
    date: String,
    actual_return: f64,
    predicted_return: f64,
    actual_price: f64,
    predicted_price: f64,
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    rdr.deserialize().map(|r| r.map_err(Into::into)).collect()
}

fn evaluate(predictions: &Path, benchmark: Option<&Path>, resamples: usize, seed: u64, harvey: bool) -> Result<()> {
    let rows = read_predictions(predictions)?;
    let actual: Vec<f64> = rows.iter().map(|r| r.actual_return).collect();
    let predicted: Vec<f64> = rows.iter().map(|r| r.predicted_return).collect();
    let prices_a: Vec<f64> = rows.iter().map(|r| r.actual_price).collect();
    let prices_p: Vec<f64> = rows.iter().map(|r| r.predicted_price).collect();
    let mut report = serde_json::Map::new();
    report.insert("metrics".into(), serde_json::to_value(metric_report(&actual, &predicted, &prices_a, &prices_p)?)?);
    let outcome = |v: forecast_core::Result<serde_json::Value>| {
        v.unwrap_or_else(|e| serde_json::json!({ "status": "unavailable", "reason": e.to_string() }))
    };
    report.insert("pt".into(), outcome(pt_test(&actual, &predicted).map(|t| serde_json::to_value(t).unwrap())));
    report.insert("binomial".into(), outcome(sign_hits(&actual, &predicted).map(|t| serde_json::to_value(t).unwrap())));
    report.insert(
        "r2_ci".into(),
        outcome(bootstrap_r2_ci(&actual, &predicted, resamples, seed).map(|t| serde_json::to_value(t).unwrap())),
    );
    if let Some(path) = benchmark {
        let bench: BTreeMap<String, f64> = read_predictions(path)?
            .into_iter()
            .map(|r| (r.date, r.actual_return - r.predicted_return))
            .collect();
        let (a, b): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter_map(|r| bench.get(&r.date).map(|e| (r.actual_return - r.predicted_return, *e)))
            .unzip();
        report.insert("dm".into(), outcome(dm_test(&a, &b, harvey).map(|t| serde_json::to_value(t).unwrap())));
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest { path, csv, out } => {
            let prices = forecast_core::io::ingest_csv(&path, &csv.options())?;
            println!(
                "{} observations, {} to {}, fingerprint {}",
                prices.len(),
                prices.dates()[0],
                prices.dates()[prices.len() - 1],
                data_fingerprint(&prices)
            );
            if let Some(out) = out {
                write_prices(&prices, fs::File::create(&out)?)?;
            }
        }
        Command::Synth { n, phi, sigma, seed, out } => {
            let prices = generate_synthetic(&SyntheticSpec::ar1(n, phi, sigma, seed))?;
            write_prices(&prices, fs::File::create(&out)?)?;
            println!("{} prices written to {}", prices.len(), out.display());
        }
        Command::Tune { experiment, family } => {
            let cfg = experiment.config()?;
            let family = parse_family(&family)?;
            let prices = load_prices(&cfg)?;
            let returns = log_returns(&prices)?;
            let mut logs = BTreeMap::new();
            for &lag in &cfg.lags {
                let design = assemble_design_matrix(&returns, &FeatureSpec::with_lags(lag))?;
                let split = chronological_split(design.n_rows(), cfg.test_fraction)?;
                let x = design.features.slice_rows(0, split.train_end);
                let outcome = tune(
                    &x,
                    &design.targets[..split.train_end],
                    family,
                    &SearchSpace::for_family(family)?,
                    &cfg.tune_settings(),
                )?;
                logs.insert(lag.to_string(), outcome);
            }
            let text = serde_json::to_string_pretty(&logs)?;
            match &cfg.output_dir {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    let path = dir.join(format!("tuning_{}.json", family.to_string().to_lowercase()));
                    fs::write(&path, text)?;
                    println!("trial log written to {}", path.display());
                }
                None => println!("{text}"),
            }
        }
        Command::Walkforward {
            experiment,
            family,
            scheme,
            lag,
        } => {
            let mut cfg = experiment.config()?;
            cfg.families = vec![parse_family(&family)?];
            cfg.schemes = vec![parse_scheme(&scheme)?];
            cfg.lags = vec![lag];
            run_and_emit(&cfg)?;
        }
        Command::Evaluate {
            predictions,
            benchmark,
            resamples,
            seed,
            no_harvey,
        } => evaluate(&predictions, benchmark.as_deref(), resamples, seed, !no_harvey)?,
        Command::Report { bundle, output_dir } => {
            let text = fs::read_to_string(&bundle).with_context(|| format!("reading {}", bundle.display()))?;
            let results: ExperimentResults = serde_json::from_str(&text)?;
            let written = emit_report(&results, &output_dir)?;
            println!("{} files written to {}", written.len(), output_dir.display());
        }
        Command::Run { experiment } => run_and_emit(&experiment.config()?)?,
    }
    Ok(())
}
