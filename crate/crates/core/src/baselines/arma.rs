//! ARMA(p, q) with a constant, fitted by conditional sum of squares.
//!
//! `r_t = c + sum_i phi_i r_{t-i} + e_t + sum_j theta_j e_{t-j}`, with the
//! first `start` observations used only as conditioning values and all
//! innovations before `start` set to zero.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::ols;
use crate::error::{ensure_finite, ForecastError, Result};

pub const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaModel {
    pub p: usize,
    pub q: usize,
    pub constant: f64,
    pub ar_coeffs: Vec<f64>,
    pub ma_coeffs: Vec<f64>,
    /// Innovation variance `SSE / n_obs`.
    pub sigma2: f64,
    pub aic: f64,
    /// Observations entering the sum of squares.
    pub n_obs: usize,
}

/// Trailing information needed for a one-step forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaContext {
    /// Most recent returns, oldest first.
    pub returns: Vec<f64>,
    /// Most recent in-sample residuals, oldest first.
    pub residuals: Vec<f64>,
}

impl ArmaModel {
    fn params_vec(&self) -> Vec<f64> {
        let mut v = vec![self.constant];
        v.extend(&self.ar_coeffs);
        v.extend(&self.ma_coeffs);
        v
    }

    /// CSS residuals of the model over `history`, conditioning on its first
    /// `p` values.
    pub fn residuals(&self, history: &[f64]) -> Vec<f64> {
        css_residuals(history, self.p, self.q, self.p, &self.params_vec())
    }

    pub fn context(&self, history: &[f64]) -> Result<ArmaContext> {
        if history.len() < self.p.max(1) {
            return Err(ForecastError::InsufficientData(format!(
                "ARMA({}, {}) forecast needs at least {} past returns",
                self.p,
                self.q,
                self.p.max(1)
            )));
        }
        let resid = self.residuals(history);
        Ok(ArmaContext {
            returns: history[history.len() - self.p..].to_vec(),
            residuals: resid[resid.len() - self.q.min(resid.len())..].to_vec(),
        })
    }

    pub fn forecast(&self, ctx: &ArmaContext) -> Result<f64> {
        if ctx.returns.len() < self.p || ctx.residuals.len() < self.q {
            return Err(ForecastError::InsufficientData(format!(
                "ARMA({}, {}) forecast context has {} returns and {} residuals",
                self.p,
                self.q,
                ctx.returns.len(),
                ctx.residuals.len()
            )));
        }
        let mut f = self.constant;
        for (i, phi) in self.ar_coeffs.iter().enumerate() {
            f += phi * ctx.returns[ctx.returns.len() - 1 - i];
        }
        for (j, theta) in self.ma_coeffs.iter().enumerate() {
            f += theta * ctx.residuals[ctx.residuals.len() - 1 - j];
        }
        Ok(f)
    }
}

/// Residuals `e_t` for `t in start..n`; `params = [c, phi.., theta..]`.
fn css_residuals(r: &[f64], p: usize, q: usize, start: usize, params: &[f64]) -> Vec<f64> {
    let c = params[0];
    let phi = &params[1..1 + p];
    let theta = &params[1 + p..1 + p + q];
    let mut e = vec![0.0; r.len()];
    for t in start..r.len() {
        let mut v = r[t] - c;
        for (i, a) in phi.iter().enumerate() {
            v -= a * r[t - 1 - i];
        }
        for (j, b) in theta.iter().enumerate() {
            if t > j {
                v -= b * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e.split_off(start)
}

/// Whether every root of `1 + a_1 z + ... + a_k z^k` lies outside the unit
/// circle, via the Schur-Cohn step-down recursion.
fn is_stable(coeffs: &[f64]) -> bool {
    let mut a = coeffs.to_vec();
    while let Some(&k) = a.last() {
        if !(k.abs() < 1.0) {
            return false;
        }
        let m = a.len();
        let denom = 1.0 - k * k;
        a = (0..m - 1).map(|i| (a[i] - k * a[m - 2 - i]) / denom).collect();
    }
    true
}

/// Stationary AR part and invertible MA part.
fn admissible(p: usize, params: &[f64]) -> bool {
    let ar: Vec<f64> = params[1..1 + p].iter().map(|v| -v).collect();
    is_stable(&ar) && is_stable(&params[1 + p..])
}

/// Sum of squares, infinite outside the stationary and invertible region.
fn css(r: &[f64], p: usize, q: usize, start: usize, params: &[f64]) -> f64 {
    if !admissible(p, params) {
        return f64::INFINITY;
    }
    let sse: f64 = css_residuals(r, p, q, start, params).iter().map(|e| e * e).sum();
    if sse.is_finite() {
        sse
    } else {
        f64::INFINITY
    }
}

/// Least-squares AR(p) with constant on `r[start..]`: `[c, phi_1..phi_p]`.
fn ar_least_squares(r: &[f64], p: usize, start: usize) -> Result<Vec<f64>> {
    let n = r.len() - start;
    let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { r[start + i - j] });
    let y = DVector::from_iterator(n, r[start..].iter().copied());
    Ok(ols(&x, &y)?.coef)
}

/// Two-stage regression start: residuals of a long AR fit stand in for the
/// unobserved innovations. `None` when the regressions are singular.
fn hannan_rissanen(r: &[f64], p: usize, q: usize, start: usize) -> Option<Vec<f64>> {
    let long = (p + q + 5).max(10);
    let first = start.max(long) + q;
    if r.len() < first + 2 * (1 + p + q) || r.len() < long + 2 * (long + 1) {
        return None;
    }
    let phi = ar_least_squares(r, long, long).ok()?;
    let mut e = vec![0.0; r.len()];
    for t in long..r.len() {
        e[t] = r[t] - phi[0] - (1..=long).map(|k| phi[k] * r[t - k]).sum::<f64>();
    }
    let n = r.len() - first;
    let x = DMatrix::from_fn(n, 1 + p + q, |i, j| {
        let t = first + i;
        match j {
            0 => 1.0,
            j if j <= p => r[t - j],
            j => e[t - (j - p)],
        }
    });
    let y = DVector::from_iterator(n, r[first..].iter().copied());
    ols(&x, &y).ok().map(|f| f.coef)
}

pub fn fit_arma(returns: &[f64], p: usize, q: usize) -> Result<ArmaModel> {
    fit_arma_from(returns, p, q, p)
}

/// Fits with the sum of squares taken over `returns[start..]` (`start >= p`),
/// so that different orders can share an estimation sample.
pub fn fit_arma_from(returns: &[f64], p: usize, q: usize, start: usize) -> Result<ArmaModel> {
    if p > MAX_ORDER || q > MAX_ORDER {
        return Err(ForecastError::InvalidParameter(format!(
            "ARMA orders are bounded by {MAX_ORDER}, got ({p}, {q})"
        )));
    }
    if start < p {
        return Err(ForecastError::InvalidParameter("start must be at least p".into()));
    }
    let needed = 10 * (p + q + 1);
    if returns.len() < needed.max(start + p + q + 2) {
        return Err(ForecastError::InsufficientData(format!(
            "ARMA({p}, {q}) needs at least {needed} observations, got {}",
            returns.len()
        )));
    }
    ensure_finite(returns, "returns")?;

    let ar = ar_least_squares(returns, p, start)?;
    let params = if q == 0 {
        ar
    } else {
        let mut from_ar = ar;
        if !admissible(p, &from_ar) {
            from_ar[1..].iter_mut().for_each(|a| *a = 0.0);
        }
        from_ar.extend(std::iter::repeat(0.0).take(q));
        let mut starts = vec![from_ar];
        if let Some(hr) = hannan_rissanen(returns, p, q, start).filter(|v| admissible(p, v)) {
            starts.push(hr);
        }
        let sd = {
            let m = returns.iter().sum::<f64>() / returns.len() as f64;
            (returns.iter().map(|v| (v - m).powi(2)).sum::<f64>() / returns.len() as f64).sqrt()
        };
        let steps: Vec<f64> = (0..1 + p + q)
            .map(|i| if i == 0 { 0.1 * sd.max(1e-12) } else { 0.1 })
            .collect();
        let objective = |v: &[f64]| css(returns, p, q, start, v);
        let max_iter = 500 * steps.len();
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut last_err = None;
        for x0 in &starts {
            // one restart from the first optimum guards against a collapsed simplex
            let fitted = nelder_mead(objective, x0, &steps, max_iter)
                .and_then(|x| nelder_mead(objective, &x, &steps, max_iter));
            match fitted {
                Ok(x) => {
                    let f = objective(&x);
                    if best.as_ref().is_none_or(|b| f < b.1) {
                        best = Some((x, f));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        match (best, last_err) {
            (Some((x, _)), _) => x,
            (None, Some(e)) => return Err(e),
            (None, None) => unreachable!("at least one start"),
        }
    };

    let n_obs = returns.len() - start;
    let sse = css(returns, p, q, start, &params);
    let sigma2 = sse / n_obs as f64;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(ForecastError::Degenerate(format!(
            "ARMA({p}, {q}) innovation variance is {sigma2}"
        )));
    }
    Ok(ArmaModel {
        p,
        q,
        constant: params[0],
        ar_coeffs: params[1..1 + p].to_vec(),
        ma_coeffs: params[1 + p..].to_vec(),
        sigma2,
        aic: n_obs as f64 * sigma2.ln() + 2.0 * (p + q + 1) as f64,
        n_obs,
    })
}

/// Minimum-AIC model over all orders `0..=max_p x 0..=max_q`, every order
/// estimated on the same sample `returns[max_p..]`. Ties prefer smaller
/// `p + q`, then smaller `p`. Orders that fail to fit are skipped.
pub fn aic_order_search(returns: &[f64], max_p: usize, max_q: usize) -> Result<ArmaModel> {
    let orders: Vec<(usize, usize)> = (0..=max_p)
        .flat_map(|p| (0..=max_q).map(move |q| (p, q)))
        .collect();
    let fits: Vec<Result<ArmaModel>> = orders
        .par_iter()
        .map(|&(p, q)| fit_arma_from(returns, p, q, max_p))
        .collect();
    fits.into_iter()
        .filter_map(|r| r.ok())
        .min_by(|a, b| {
            a.aic
                .total_cmp(&b.aic)
                .then((a.p + a.q).cmp(&(b.p + b.q)))
                .then(a.p.cmp(&b.p))
        })
        .ok_or_else(|| ForecastError::NonConvergence("no ARMA order could be fitted".into()))
}

/// Derivative-free simplex minimization with standard reflection,
/// expansion, contraction and shrink coefficients.
fn nelder_mead<F>(f: F, x0: &[f64], steps: &[f64], max_iter: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[dim];
        let spread = (worst - best).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if best.is_finite() && spread <= 1e-10 * best.abs() + 1e-300 && size < 1e-7 {
            return Ok(simplex.swap_remove(0));
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|v| v[k]).sum::<f64>() / dim as f64)
            .collect();
        let reflected = blend(&centroid, &simplex[dim], -1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = blend(&centroid, &simplex[dim], -2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
        } else {
            let (contracted, fc) = if fr < values[dim] {
                let c = blend(&centroid, &reflected, 0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = blend(&centroid, &simplex[dim], 0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < values[dim].min(fr) {
                simplex[dim] = contracted;
                values[dim] = fc;
            } else {
                for i in 1..=dim {
                    simplex[i] = blend(&simplex[0], &simplex[i], 0.5);
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    Err(ForecastError::NonConvergence(format!(
        "simplex search exceeded {max_iter} iterations"
    )))
}
