//! Second-order gradient-boosted regression trees under squared-error loss.
//!
//! Each round computes gradients `pred - y` and unit hessians, grows one tree
//! greedily to `max_depth` on a row subsample restricted to a per-tree column
//! subsample, and adds `learning_rate * tree(x)` to the running prediction.
//! Leaves use the L1 soft-threshold / L2 shrinkage closed form and splits
//! must clear `gamma` and `min_child_weight`.

mod binning;
mod tree;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ForecastError, Result};
use crate::matrix::Matrix;
use binning::BinnedData;
pub use tree::{best_split, leaf_weight, split_gain, Split, SplitRules, Tree, TreeNode, GAIN_TIE_TOLERANCE};
use tree::{SplitFinder, TreeGrower};

pub const DEFAULT_BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// Every midpoint between consecutive distinct values is a candidate.
    Exact,
    /// Candidates restricted to the edges of at most `bins` quantile bins.
    Histogram { bins: usize },
}

impl Default for SplitMode {
    fn default() -> Self {
        SplitMode::Histogram { bins: DEFAULT_BINS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    pub seed: u64,
    #[serde(default)]
    pub split_mode: SplitMode,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 6,
            learning_rate: 0.3,
            subsample: 1.0,
            colsample_bytree: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            reg_alpha: 0.0,
            reg_lambda: 1.0,
            seed: 42,
            split_mode: SplitMode::default(),
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(ForecastError::InvalidParameter(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad("colsample_bytree must lie in (0, 1]");
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("min_child_weight", self.min_child_weight),
            ("reg_alpha", self.reg_alpha),
            ("reg_lambda", self.reg_lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ForecastError::InvalidParameter(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        if let SplitMode::Histogram { bins } = self.split_mode {
            if bins < 2 {
                return bad("histogram mode needs at least 2 bins");
            }
        }
        Ok(())
    }

    fn max_bins(&self) -> Option<usize> {
        match self.split_mode {
            SplitMode::Exact => None,
            SplitMode::Histogram { bins } => Some(bins),
        }
    }
}

/// Fitted ensemble. Prediction is `base_score + learning_rate * sum(trees)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    pub base_score: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Sum of retained split gains per feature column.
    pub feature_gain_totals: Vec<f64>,
}

pub fn fit_gbt(x: &Matrix, y: &[f64], params: &GbtParams) -> Result<GbtModel> {
    fit_with_predictions(x, y, params).map(|(model, _)| model)
}

/// Fits and also returns the running training predictions after the last
/// round.
pub(crate) fn fit_with_predictions(
    x: &Matrix,
    y: &[f64],
    params: &GbtParams,
) -> Result<(GbtModel, Vec<f64>)> {
    params.validate()?;
    let n = x.n_rows();
    if n != y.len() {
        return Err(ForecastError::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    if n < 2 {
        return Err(ForecastError::InsufficientData(format!(
            "boosting needs at least 2 rows, got {n}"
        )));
    }
    if !x.is_finite() {
        return Err(ForecastError::NonFinite {
            what: "features",
            index: (0..n).find(|&i| x.row(i).iter().any(|v| !v.is_finite())).unwrap_or(0),
        });
    }
    ensure_finite(y, "targets")?;

    let p = x.n_cols();
    // shifted mean: exact for constant targets
    let base_score = y[0] + y.iter().map(|v| v - y[0]).sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let hess = vec![1.0; n];
    let data = BinnedData::build(x, params.max_bins());
    let rules = SplitRules {
        reg_lambda: params.reg_lambda,
        gamma: params.gamma,
        min_child_weight: params.min_child_weight,
    };
    let n_rows_sampled = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols_sampled = ((params.colsample_bytree * p as f64).round() as usize).clamp(1, p.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut gain_totals = vec![0.0; p];
    let mut finder = SplitFinder::default();

    for _ in 0..params.n_estimators {
        for i in 0..n {
            grad[i] = pred[i] - y[i];
        }
        let rows = if n_rows_sampled == n {
            (0..n).collect()
        } else {
            let mut r = sample(&mut rng, n, n_rows_sampled).into_vec();
            r.sort_unstable();
            r
        };
        let features = if n_cols_sampled >= p {
            (0..p).collect()
        } else {
            let mut f = sample(&mut rng, p, n_cols_sampled).into_vec();
            f.sort_unstable();
            f
        };
        let grower = TreeGrower {
            data: &data,
            x,
            grad: &grad,
            hess: &hess,
            features: &features,
            rules,
            max_depth: params.max_depth,
            reg_alpha: params.reg_alpha,
            finder: std::mem::take(&mut finder),
            nodes: Vec::new(),
            gains: Vec::new(),
        };
        let (tree, gains) = grower.grow(rows);
        for (f, g) in gains {
            gain_totals[f] += g;
        }
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.eval(x.row(i));
        }
        trees.push(tree);
    }

    let model = GbtModel {
        params: params.clone(),
        base_score,
        n_features: p,
        trees,
        feature_gain_totals: gain_totals,
    };
    Ok((model, pred))
}

impl GbtModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut p = self.base_score;
        for tree in &self.trees {
            p += self.params.learning_rate * tree.eval(row);
        }
        p
    }

    /// Model restricted to its first `rounds` trees.
    pub fn truncated(&self, rounds: usize) -> GbtModel {
        let trees: Vec<Tree> = self.trees.iter().take(rounds).cloned().collect();
        let mut gain_totals = vec![0.0; self.n_features];
        for tree in &trees {
            for node in &tree.nodes {
                if let TreeNode::Split { feature, gain, .. } = node {
                    gain_totals[*feature] += gain;
                }
            }
        }
        GbtModel {
            params: self.params.clone(),
            base_score: self.base_score,
            n_features: self.n_features,
            trees,
            feature_gain_totals: gain_totals,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn predict_gbt(model: &GbtModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.n_cols() != model.n_features {
        return Err(ForecastError::LengthMismatch {
            left: model.n_features,
            right: x.n_cols(),
        });
    }
    Ok(x.rows().map(|row| model.predict_row(row)).collect())
}

/// Features ranked by total split gain, descending; equal totals keep column
/// order.
pub fn gain_importance(model: &GbtModel, names: &[String]) -> Vec<(String, f64)> {
    let mut ranked: Vec<(usize, f64)> = model.feature_gain_totals.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
        .into_iter()
        .map(|(j, g)| {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("f{j}"));
            (name, g)
        })
        .collect()
}
