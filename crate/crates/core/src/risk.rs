//! Risk statistics over returns: empirical CVaR, order-statistic quantiles and
//! importance-weighted quantiles.
//!
//! Conventions are hard order statistics without interpolation: the
//! `p`-quantile of `N` values is the `ceil(p N)`-th smallest, and CVaR is the
//! mean of the `ceil(alpha N)` smallest values.

use crate::error::{domain, Error, Result};

fn check_level(p: f64, what: &str) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(domain(format!("{what} must lie in (0, 1], got {p}")));
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(domain("empty sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(domain("sample contains NaN"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Number of order statistics in the lower `p` tail of `n` values, at least one.
pub fn tail_count(n: usize, p: f64) -> usize {
    ((p * n as f64).ceil() as usize).clamp(1, n)
}

/// Empirical lower-tail CVaR: mean of the `ceil(alpha N)` smallest values.
pub fn cvar(values: &[f64], alpha: f64) -> Result<f64> {
    check_level(alpha, "alpha")?;
    let v = sorted(values)?;
    let k = tail_count(v.len(), alpha);
    Ok(v[..k].iter().sum::<f64>() / k as f64)
}

/// The `ceil(p N)`-th smallest value.
///
/// `p = 1` is accepted and returns the maximum; CVaR-ML at `alpha = 1` relies on it.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    check_level(p, "quantile level")?;
    let v = sorted(values)?;
    Ok(v[tail_count(v.len(), p) - 1])
}

/// Smallest value `v` whose normalized weight mass `sum{w_i : x_i <= v} / sum w` reaches `p`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> Result<f64> {
    check_level(p, "quantile level")?;
    if values.len() != weights.len() {
        return Err(Error::Shape(format!("{} values but {} weights", values.len(), weights.len())));
    }
    if values.is_empty() {
        return Err(domain("empty sample"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(domain("weights must be finite and nonnegative"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(domain("sample contains NaN"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(domain("weights sum to zero"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let target = p * total;
    let mut cum = 0.0;
    let mut last_positive = values[order[0]];
    let mut i = 0;
    while i < order.len() {
        // Equal values form one atom.
        let v = values[order[i]];
        while i < order.len() && values[order[i]] == v {
            cum += weights[order[i]];
            if weights[order[i]] > 0.0 {
                last_positive = v;
            }
            i += 1;
        }
        if cum >= target {
            return Ok(v);
        }
    }
    // Rounding left the running sum a hair below `p * total`.
    Ok(last_positive)
}

/// Returns of one batch of tasks: `N` tasks with `M` rollouts each and their
/// importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnBatch {
    per_rollout: Vec<Vec<f64>>,
    per_task: Vec<f64>,
    weights: Vec<f64>,
}

impl ReturnBatch {
    /// Builds a batch with unit weights; `per_rollout[i]` holds the returns of task `i`.
    pub fn new(per_rollout: Vec<Vec<f64>>) -> Result<Self> {
        if per_rollout.is_empty() || per_rollout.iter().any(|r| r.is_empty()) {
            return Err(domain("every task needs at least one rollout"));
        }
        let per_task = per_rollout
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect();
        let weights = vec![1.0; per_rollout.len()];
        Ok(ReturnBatch { per_rollout, per_task, weights })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.per_task.len() {
            return Err(Error::Shape(format!("{} tasks but {} weights", self.per_task.len(), weights.len())));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(domain("weights must be finite and nonnegative"));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.per_task.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_task.is_empty()
    }

    pub fn per_task(&self) -> &[f64] {
        &self.per_task
    }

    pub fn per_rollout(&self) -> &[Vec<f64>] {
        &self.per_rollout
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Unweighted `p`-quantile of the per-task returns.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        quantile(&self.per_task, p)
    }

    /// Importance-weighted `p`-quantile of the per-task returns.
    pub fn weighted_quantile(&self, p: f64) -> Result<f64> {
        weighted_quantile(&self.per_task, &self.weights, p)
    }

    /// Indices of all tasks with `R_i <= threshold`, ties included.
    pub fn at_or_below(&self, threshold: f64) -> Vec<usize> {
        (0..self.per_task.len()).filter(|&i| self.per_task[i] <= threshold).collect()
    }

    /// The CVaR-ML selection: every task whose mean return is at or below the
    /// empirical `alpha`-quantile of the per-task means.
    pub fn tail_tasks(&self, alpha: f64) -> Result<Vec<usize>> {
        let q = self.quantile(alpha)?;
        Ok(self.at_or_below(q))
    }
}
