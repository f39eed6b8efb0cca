//! Data ingestion, synthetic series, experiment configuration, the
//! end-to-end experiment runner and report emission.

mod config;
mod experiment;
mod ingest;
mod report;
mod synthetic;

pub use config::{DataSource, ExperimentConfig, FixedParams, SchemeKind};
pub use experiment::{
    ar1_coefficient, load_prices, run_experiment, Comparisons, Computed, DataSummary, DmComparison, ExperimentResults,
    FeatureGain, ParamSource, RunKey, RunOutcome, TuningRecord, SCHEMA_VERSION,
};
pub use ingest::{data_fingerprint, ingest_csv, read_prices, write_prices, CsvOptions};
pub use report::{best_runs, emit_report, summary_text, table1, table2};
pub use synthetic::{generate_synthetic, SyntheticSpec, VolRegime};
