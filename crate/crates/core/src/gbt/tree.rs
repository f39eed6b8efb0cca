use serde::{Deserialize, Serialize};

use super::binning::{BinnedData, BinnedFeature};
use crate::error::{ForecastError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf { weight: f64 },
}

/// A regression tree stored as a node arena in pre-order; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { weight }],
        }
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { weight } => return weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// Soft-thresholded, L2-shrunk optimal leaf value for gradient sum `g` and
/// hessian sum `h`.
pub fn leaf_weight(g: f64, h: f64, reg_alpha: f64, reg_lambda: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(ForecastError::InvalidParameter(format!(
            "hessian sum must be positive, got {h}"
        )));
    }
    Ok(unchecked_leaf_weight(g, h, reg_alpha, reg_lambda))
}

pub(crate) fn unchecked_leaf_weight(g: f64, h: f64, reg_alpha: f64, reg_lambda: f64) -> f64 {
    let shrunk = (g.abs() - reg_alpha).max(0.0);
    if shrunk == 0.0 {
        return 0.0;
    }
    -g.signum() * shrunk / (h + reg_lambda)
}

/// Loss reduction of splitting a node into (left, right), net of `gamma`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, reg_lambda: f64, gamma: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - g * g / (h + reg_lambda))
        - gamma
}

/// A candidate must beat the current best gain by this relative margin to
/// replace it, so rounding noise between equivalent splits never decides.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-12;

fn beats(gain: f64, best: f64) -> bool {
    gain > best && gain - best > GAIN_TIE_TOLERANCE * best.abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRules {
    pub reg_lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    /// Largest bin index routed left; internal to the binned finder.
    pub(crate) left_bin: u32,
}

/// Best gamma-adjusted split of `rows` over every feature of `x`, using
/// exact-greedy midpoints. Gains within [`GAIN_TIE_TOLERANCE`] of each other
/// are ties and go to the lower feature, then the lower threshold. `None`
/// when no split has positive gain or satisfies `min_child_weight`.
pub fn best_split(
    x: &Matrix,
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    rules: &SplitRules,
) -> Option<Split> {
    if rows.len() < 2 {
        return None;
    }
    let binned = BinnedData::build(x, None);
    let features: Vec<usize> = (0..x.n_cols()).collect();
    let mut finder = SplitFinder::default();
    finder.find(&binned, &features, rows, grad, hess, rules)
}

#[derive(Default)]
pub(crate) struct SplitFinder {
    dense_g: Vec<f64>,
    dense_h: Vec<f64>,
    dense_n: Vec<u32>,
    pairs: Vec<(u32, usize)>,
    occupied: Vec<(u32, f64, f64)>,
}

impl SplitFinder {
    /// `rows` must be sorted ascending so that per-bin sums accumulate in the
    /// same order regardless of which accumulation path is taken.
    pub fn find(
        &mut self,
        data: &BinnedData,
        features: &[usize],
        rows: &[usize],
        grad: &[f64],
        hess: &[f64],
        rules: &SplitRules,
    ) -> Option<Split> {
        let g_total: f64 = rows.iter().map(|&r| grad[r]).sum();
        let h_total: f64 = rows.iter().map(|&r| hess[r]).sum();
        let mut best: Option<Split> = None;
        let mut best_gain = 0.0;
        for &f in features {
            let feat = &data.features[f];
            self.accumulate(feat, rows, grad, hess);
            let mut gl = 0.0;
            let mut hl = 0.0;
            for k in 0..self.occupied.len().saturating_sub(1) {
                let (bin, g, h) = self.occupied[k];
                gl += g;
                hl += h;
                let gr = g_total - gl;
                let hr = h_total - hl;
                if hl < rules.min_child_weight || hr < rules.min_child_weight {
                    continue;
                }
                let gain = split_gain(gl, hl, gr, hr, rules.reg_lambda, rules.gamma);
                if beats(gain, best_gain) {
                    best_gain = gain;
                    let next = self.occupied[k + 1].0;
                    best = Some(Split {
                        feature: f,
                        threshold: midpoint(feat.bin_max[bin as usize], feat.bin_min[next as usize]),
                        gain,
                        left_bin: bin,
                    });
                }
            }
        }
        best
    }

    /// Fills `self.occupied` with (bin, grad sum, hess sum) for each bin that
    /// holds at least one of `rows`, in ascending bin order.
    fn accumulate(&mut self, feat: &BinnedFeature, rows: &[usize], grad: &[f64], hess: &[f64]) {
        self.occupied.clear();
        let n_bins = feat.n_bins();
        if rows.len() * 4 < n_bins {
            self.pairs.clear();
            self.pairs
                .extend(rows.iter().map(|&r| (feat.bin_of_row[r], r)));
            // stable: rows stay in ascending order within a bin
            self.pairs.sort_by_key(|p| p.0);
            for &(bin, r) in &self.pairs {
                match self.occupied.last_mut() {
                    Some(last) if last.0 == bin => {
                        last.1 += grad[r];
                        last.2 += hess[r];
                    }
                    _ => self.occupied.push((bin, 0.0 + grad[r], 0.0 + hess[r])),
                }
            }
        } else {
            self.dense_g.clear();
            self.dense_g.resize(n_bins, 0.0);
            self.dense_h.clear();
            self.dense_h.resize(n_bins, 0.0);
            self.dense_n.clear();
            self.dense_n.resize(n_bins, 0);
            for &r in rows {
                let b = feat.bin_of_row[r] as usize;
                self.dense_g[b] += grad[r];
                self.dense_h[b] += hess[r];
                self.dense_n[b] += 1;
            }
            for b in 0..n_bins {
                if self.dense_n[b] > 0 {
                    self.occupied
                        .push((b as u32, self.dense_g[b], self.dense_h[b]));
                }
            }
        }
    }
}

/// Threshold strictly separating `lo` (routed left) from `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

pub(crate) struct TreeGrower<'a> {
    pub data: &'a BinnedData,
    pub x: &'a Matrix,
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub features: &'a [usize],
    pub rules: SplitRules,
    pub max_depth: usize,
    pub reg_alpha: f64,
    pub finder: SplitFinder,
    pub nodes: Vec<TreeNode>,
    pub gains: Vec<(usize, f64)>,
}

impl TreeGrower<'_> {
    pub fn grow(mut self, rows: Vec<usize>) -> (Tree, Vec<(usize, f64)>) {
        self.node(rows, 0);
        (Tree { nodes: self.nodes }, self.gains)
    }

    fn node(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { weight: 0.0 });
        let split = if depth < self.max_depth && rows.len() >= 2 {
            self.finder.find(
                self.data,
                self.features,
                &rows,
                self.grad,
                self.hess,
                &self.rules,
            )
        } else {
            None
        };
        match split {
            Some(s) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| self.x.get(r, s.feature) <= s.threshold);
                drop(rows);
                self.gains.push((s.feature, s.gain));
                let left = self.node(left_rows, depth + 1);
                let right = self.node(right_rows, depth + 1);
                self.nodes[id] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                    gain: s.gain,
                };
            }
            None => {
                let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
                let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
                self.nodes[id] = TreeNode::Leaf {
                    weight: unchecked_leaf_weight(g, h, self.reg_alpha, self.rules.reg_lambda),
                };
            }
        }
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_weight_closed_form() {
        assert_eq!(leaf_weight(0.0, 3.0, 0.5, 1.0).unwrap(), 0.0);
        assert_eq!(leaf_weight(-4.0, 2.0, 0.0, 0.0).unwrap(), 2.0);
        assert_eq!(leaf_weight(-4.0, 2.0, 1.0, 2.0).unwrap(), 0.75);
        assert_eq!(leaf_weight(4.0, 2.0, 1.0, 2.0).unwrap(), -0.75);
        // |G| below the L1 threshold
        assert_eq!(leaf_weight(0.5, 2.0, 1.0, 0.0).unwrap(), 0.0);
        assert!(leaf_weight(1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn gain_hand_substitution() {
        assert_eq!(split_gain(-2.0, 1.0, 2.0, 1.0, 0.0, 0.0), 4.0);
        assert_eq!(split_gain(-2.0, 1.0, 2.0, 1.0, 0.0, 5.0), -1.0);
    }

    fn one_feature(values: &[f64]) -> Matrix {
        Matrix::from_flat(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn homogeneous_node_has_no_split() {
        let x = one_feature(&[1.0, 2.0, 3.0, 4.0]);
        let rules = SplitRules {
            reg_lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
        };
        let g = [0.3; 4];
        let h = [1.0; 4];
        assert!(best_split(&x, &[0, 1, 2, 3], &g, &h, &rules).is_none());
    }

    #[test]
    fn picks_the_separating_threshold() {
        let x = one_feature(&[1.0, 2.0, 3.0, 4.0]);
        let g = [-1.0, -1.0, 1.0, 1.0];
        let h = [1.0; 4];
        let rules = SplitRules {
            reg_lambda: 0.0,
            gamma: 0.0,
            min_child_weight: 0.0,
        };
        let s = best_split(&x, &[0, 1, 2, 3], &g, &h, &rules).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 2.5);
        assert_eq!(s.gain, 2.0);
        // gamma above the raw gain prunes it
        let pruned = SplitRules { gamma: 5.0, ..rules };
        assert!(best_split(&x, &[0, 1, 2, 3], &g, &h, &pruned).is_none());
        // each child must carry hessian >= 3
        let heavy = SplitRules {
            min_child_weight: 3.0,
            ..rules
        };
        assert!(best_split(&x, &[0, 1, 2, 3], &g, &h, &heavy).is_none());
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        let x = Matrix::from_rows(&[
            vec![1.0, 1.0],
            vec![2.0, 2.0],
            vec![3.0, 3.0],
            vec![4.0, 4.0],
        ])
        .unwrap();
        let g = [-1.0, -1.0, 1.0, 1.0];
        let h = [1.0; 4];
        let rules = SplitRules {
            reg_lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
        };
        assert_eq!(best_split(&x, &[0, 1, 2, 3], &g, &h, &rules).unwrap().feature, 0);
    }

    #[test]
    fn midpoint_never_reaches_upper_value() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(lo <= m && m < hi);
    }
}
