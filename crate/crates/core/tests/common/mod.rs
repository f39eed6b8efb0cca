//! Test-only reference implementations, written independently of the
//! library code paths they check.
#![allow(dead_code)]

use forecast_core::gbt::{Tree, TreeNode};

/// Reference tree from exhaustive enumeration of every (feature, midpoint)
/// split of every node.
#[derive(Debug, Clone, PartialEq)]
pub enum RefNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<RefNode>,
        right: Box<RefNode>,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct RefParams {
    pub max_depth: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub reg_lambda: f64,
    pub reg_alpha: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

fn ref_leaf(g: f64, h: f64, p: &RefParams) -> f64 {
    let t = if g > p.reg_alpha {
        g - p.reg_alpha
    } else if g < -p.reg_alpha {
        g + p.reg_alpha
    } else {
        0.0
    };
    -t / (h + p.reg_lambda)
}

fn ref_node(x: &[Vec<f64>], rows: &[usize], grad: &[f64], depth: usize, p: &RefParams) -> RefNode {
    let g_node: f64 = rows.iter().map(|&r| grad[r]).sum();
    let h_node = rows.len() as f64;
    if depth < p.max_depth && rows.len() >= 2 {
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            for w in vals.windows(2) {
                let mut t = w[0] + (w[1] - w[0]) / 2.0;
                if t >= w[1] {
                    t = w[0];
                }
                let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
                for &r in rows {
                    if x[r][f] <= t {
                        gl += grad[r];
                        hl += 1.0;
                    } else {
                        gr += grad[r];
                        hr += 1.0;
                    }
                }
                if hl < p.min_child_weight || hr < p.min_child_weight {
                    continue;
                }
                let lam = p.reg_lambda;
                let gain = 0.5
                    * (gl * gl / (hl + lam) + gr * gr / (hr + lam)
                        - (gl + gr) * (gl + gr) / (hl + hr + lam))
                    - p.gamma;
                // equal gains up to rounding go to the earlier candidate
                let incumbent = best.map_or(0.0, |b| b.2);
                if gain > incumbent && gain - incumbent > 1e-12 * incumbent.abs() {
                    best = Some((f, t, gain));
                }
            }
        }
        if let Some((f, t, _)) = best {
            let left: Vec<usize> = rows.iter().copied().filter(|&r| x[r][f] <= t).collect();
            let right: Vec<usize> = rows.iter().copied().filter(|&r| x[r][f] > t).collect();
            return RefNode::Split {
                feature: f,
                threshold: t,
                left: Box::new(ref_node(x, &left, grad, depth + 1, p)),
                right: Box::new(ref_node(x, &right, grad, depth + 1, p)),
            };
        }
    }
    RefNode::Leaf(ref_leaf(g_node, h_node, p))
}

fn ref_eval(node: &RefNode, row: &[f64]) -> f64 {
    match node {
        RefNode::Leaf(w) => *w,
        RefNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if row[*feature] <= *threshold {
                ref_eval(left, row)
            } else {
                ref_eval(right, row)
            }
        }
    }
}

/// Full boosting loop (mean base score, squared error) over reference trees.
pub fn ref_boost(x: &[Vec<f64>], y: &[f64], p: &RefParams) -> Vec<RefNode> {
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let rows: Vec<usize> = (0..n).collect();
    let mut trees = Vec::new();
    for _ in 0..p.rounds {
        let grad: Vec<f64> = (0..n).map(|i| pred[i] - y[i]).collect();
        let tree = ref_node(x, &rows, &grad, 0, p);
        for i in 0..n {
            pred[i] += p.learning_rate * ref_eval(&tree, &x[i]);
        }
        trees.push(tree);
    }
    trees
}

/// Compares a fitted arena tree with a reference tree: identical shape,
/// features and thresholds, leaf weights within `tol`.
pub fn same_tree(tree: &Tree, reference: &RefNode, tol: f64) -> Result<(), String> {
    fn walk(nodes: &[TreeNode], i: usize, r: &RefNode, tol: f64) -> Result<(), String> {
        match (&nodes[i], r) {
            (TreeNode::Leaf { weight }, RefNode::Leaf(w)) => {
                if (weight - w).abs() <= tol {
                    Ok(())
                } else {
                    Err(format!("leaf weight {weight} vs reference {w}"))
                }
            }
            (
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                },
                RefNode::Split {
                    feature: rf,
                    threshold: rt,
                    left: rl,
                    right: rr,
                },
            ) => {
                if feature != rf || threshold != rt {
                    return Err(format!(
                        "split ({feature}, {threshold}) vs reference ({rf}, {rt})"
                    ));
                }
                walk(nodes, *left, rl, tol)?;
                walk(nodes, *right, rr, tol)
            }
            (a, b) => Err(format!("shape mismatch: {a:?} vs {b:?}")),
        }
    }
    walk(&tree.nodes, 0, reference, tol)
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve_gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Ridge in standardized coordinates with an unpenalized intercept, solved as
/// one augmented normal-equation system; returns (coefficients on the
/// original scale, intercept).
pub fn ref_ridge(x: &[Vec<f64>], y: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let p = x[0].len();
    let mean: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let sd: Vec<f64> = (0..p)
        .map(|j| (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64).sqrt())
        .collect();
    // design [z_1..z_p, 1]
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            let mut v: Vec<f64> = (0..p).map(|j| (r[j] - mean[j]) / sd[j]).collect();
            v.push(1.0);
            v
        })
        .collect();
    let mut a = vec![vec![0.0; p + 1]; p + 1];
    let mut b = vec![0.0; p + 1];
    for (zi, yi) in z.iter().zip(y) {
        for i in 0..=p {
            b[i] += zi[i] * yi;
            for k in 0..=p {
                a[i][k] += zi[i] * zi[k];
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate().take(p) {
        row[i] += alpha;
    }
    let sol = solve_gauss(a, b);
    let coef: Vec<f64> = (0..p).map(|j| sol[j] / sd[j]).collect();
    let intercept = sol[p] - (0..p).map(|j| coef[j] * mean[j]).sum::<f64>();
    (coef, intercept)
}

/// Upper-tail binomial probability by exact enumeration with integer
/// binomial coefficients.
pub fn ref_binomial_upper(k: u64, n: u64) -> f64 {
    let mut total: u128 = 0;
    for i in k..=n {
        let mut c: u128 = 1;
        for j in 0..i {
            c = c * (n - j) as u128 / (j + 1) as u128;
        }
        total += c;
    }
    total as f64 / 2f64.powi(n as i32)
}
