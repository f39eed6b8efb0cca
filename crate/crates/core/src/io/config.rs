use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ingest::CsvOptions;
use super::synthetic::SyntheticSpec;
use crate::baselines::MAX_ORDER;
use crate::error::{ForecastError, Result};
use crate::gbt::{GbtParams, SplitMode};
use crate::model::ModelFamily;
use crate::tuning::{Sampler, TuneSettings, DEFAULT_FOLDS, DEFAULT_SEED, DEFAULT_TRIALS};
use crate::walkforward::{WindowScheme, DEFAULT_ROLLING_LENGTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        options: CsvOptions,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Expanding,
    Rolling,
}

/// Hyperparameters that bypass tuning for their family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedParams {
    pub gbt: Option<GbtParams>,
    pub ridge_alpha: Option<f64>,
    pub arma_order: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub families: Vec<ModelFamily>,
    pub lags: Vec<usize>,
    pub schemes: Vec<SchemeKind>,
    pub test_fraction: f64,
    pub rolling_length: usize,
    pub trials: usize,
    pub folds: usize,
    pub sampler: Sampler,
    pub seed: u64,
    pub split_mode: SplitMode,
    pub fixed: FixedParams,
    pub max_arma_order: usize,
    /// Re-select the ARMA order at every walk-forward step instead of
    /// reusing the order chosen on the training block.
    pub reselect_arma_order: bool,
    pub harvey_correction: bool,
    pub bootstrap_resamples: usize,
    /// Length of the trailing actual-vs-predicted price series.
    pub plot_last_days: usize,
    pub top_features: usize,
    /// Not part of the configuration hash.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticSpec::ar1(3000, 0.3, 0.01, DEFAULT_SEED)),
            families: vec![ModelFamily::Gbt, ModelFamily::Ridge, ModelFamily::Arma],
            lags: vec![10, 20, 30],
            schemes: vec![SchemeKind::Expanding, SchemeKind::Rolling],
            test_fraction: 0.2,
            rolling_length: DEFAULT_ROLLING_LENGTH,
            trials: DEFAULT_TRIALS,
            folds: DEFAULT_FOLDS,
            sampler: Sampler::Tpe,
            seed: DEFAULT_SEED,
            split_mode: SplitMode::default(),
            fixed: FixedParams::default(),
            max_arma_order: MAX_ORDER,
            reselect_arma_order: false,
            harvey_correction: true,
            bootstrap_resamples: crate::evaluation::BOOTSTRAP_RESAMPLES,
            plot_last_days: 400,
            top_features: 5,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ForecastError::InvalidParameter(m));
        if self.families.is_empty() || self.schemes.is_empty() {
            return bad("at least one model family and one window scheme are required".into());
        }
        let feature_families = self.families.iter().any(|f| *f != ModelFamily::Arma);
        if feature_families && self.lags.is_empty() {
            return bad("GBT and ridge runs need at least one lag configuration".into());
        }
        if self.lags.is_empty() && self.families.contains(&ModelFamily::Arma) {
            return bad("ARMA runs align to the first lag configuration; give at least one".into());
        }
        if self.lags.contains(&0) {
            return bad("lag counts must be positive".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.max_arma_order > MAX_ORDER {
            return bad(format!("max_arma_order is capped at {MAX_ORDER}"));
        }
        if let Some((p, q)) = self.fixed.arma_order {
            if p > MAX_ORDER || q > MAX_ORDER {
                return bad(format!("ARMA orders are capped at {MAX_ORDER}"));
            }
        }
        if let Some(a) = self.fixed.ridge_alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return bad(format!("ridge alpha must be >= 0, got {a}"));
            }
        }
        if let Some(p) = &self.fixed.gbt {
            p.validate()?;
        }
        if self.bootstrap_resamples < 2 {
            return bad("bootstrap_resamples must be at least 2".into());
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
        }
        self.scheme(SchemeKind::Rolling).validate()
    }

    pub fn scheme(&self, kind: SchemeKind) -> WindowScheme {
        match kind {
            SchemeKind::Expanding => WindowScheme::Expanding,
            SchemeKind::Rolling => WindowScheme::Rolling {
                length: self.rolling_length,
            },
        }
    }

    pub fn tune_settings(&self) -> TuneSettings {
        TuneSettings {
            trials: self.trials,
            folds: self.folds,
            seed: self.seed,
            sampler: self.sampler,
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let text = serde_json::to_string(&canonical)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
