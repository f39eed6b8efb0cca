//! Feature discretization shared by the exact and histogram split finders.
//!
//! Exact mode gives every distinct value its own bin, so a scan over bins is
//! a scan over all midpoints. Histogram mode merges neighbouring distinct
//! values into at most `max_bins` quantile bins; when a feature has no more
//! distinct values than bins the two modes coincide.

use crate::matrix::Matrix;

pub(crate) struct BinnedFeature {
    /// Bin index per training row.
    pub bin_of_row: Vec<u32>,
    /// Smallest and largest training value in each bin.
    pub bin_min: Vec<f64>,
    pub bin_max: Vec<f64>,
}

impl BinnedFeature {
    pub fn n_bins(&self) -> usize {
        self.bin_min.len()
    }
}

pub(crate) struct BinnedData {
    pub features: Vec<BinnedFeature>,
}

impl BinnedData {
    /// `max_bins = None` selects exact mode.
    pub fn build(x: &Matrix, max_bins: Option<usize>) -> Self {
        let features = (0..x.n_cols())
            .map(|j| bin_column(&x.column(j), max_bins))
            .collect();
        Self { features }
    }
}

fn bin_column(values: &[f64], max_bins: Option<usize>) -> BinnedFeature {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    // distinct values with multiplicities, ascending
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &i in &order {
        match distinct.last_mut() {
            Some((v, c)) if *v == values[i] => *c += 1,
            _ => distinct.push((values[i], 1)),
        }
    }

    // bin id for each distinct value
    let bin_of_distinct: Vec<u32> = match max_bins {
        Some(b) if distinct.len() > b => quantile_bins(&distinct, n, b),
        _ => (0..distinct.len() as u32).collect(),
    };
    let n_bins = bin_of_distinct.last().map_or(0, |b| *b as usize + 1);
    let mut bin_min = vec![f64::INFINITY; n_bins];
    let mut bin_max = vec![f64::NEG_INFINITY; n_bins];
    for (&(v, _), &b) in distinct.iter().zip(&bin_of_distinct) {
        let b = b as usize;
        bin_min[b] = bin_min[b].min(v);
        bin_max[b] = bin_max[b].max(v);
    }

    let mut bin_of_row = vec![0u32; n];
    let mut d = 0;
    for &i in &order {
        while distinct[d].0 != values[i] {
            d += 1;
        }
        bin_of_row[i] = bin_of_distinct[d];
    }
    BinnedFeature {
        bin_of_row,
        bin_min,
        bin_max,
    }
}

/// Greedy equal-frequency grouping of sorted distinct values into at most
/// `max_bins` bins; bin boundaries only fall between distinct values.
fn quantile_bins(distinct: &[(f64, usize)], n: usize, max_bins: usize) -> Vec<u32> {
    let per_bin = n as f64 / max_bins as f64;
    let mut out = Vec::with_capacity(distinct.len());
    let mut bin = 0u32;
    let mut seen = 0usize;
    for &(_, count) in distinct {
        if seen as f64 >= per_bin * (bin as f64 + 1.0) && (bin as usize) < max_bins - 1 {
            bin += 1;
        }
        out.push(bin);
        seen += count;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_mode_one_bin_per_value() {
        let b = bin_column(&[3.0, 1.0, 2.0, 1.0], None);
        assert_eq!(b.bin_of_row, vec![2, 0, 1, 0]);
        assert_eq!(b.bin_min, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn histogram_caps_bins() {
        let values: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = bin_column(&values, Some(16));
        assert!(b.n_bins() <= 16 && b.n_bins() >= 12);
        // bins are ordered and non-overlapping
        for k in 1..b.n_bins() {
            assert!(b.bin_max[k - 1] < b.bin_min[k]);
        }
        for (i, v) in values.iter().enumerate() {
            let k = b.bin_of_row[i] as usize;
            assert!(b.bin_min[k] <= *v && *v <= b.bin_max[k]);
        }
    }

    #[test]
    fn few_distinct_values_match_exact() {
        let values = [0.5, 0.1, 0.5, 0.9, 0.1];
        let h = bin_column(&values, Some(256));
        let e = bin_column(&values, None);
        assert_eq!(h.bin_of_row, e.bin_of_row);
    }
}
