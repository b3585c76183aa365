//! Cross-entropy task samplers.
//!
//! [`CemState`] is the dynamic-target sampler used by RoML: a `nu` fraction of
//! every batch comes from the original distribution, the rest from the current
//! member `phi`, and after the batch is scored the sampler is refit to the tasks
//! at or below `max(q_alpha_hat, q_beta)`, where `q_alpha_hat` is the
//! importance-weighted `alpha`-quantile of returns under the original
//! distribution and `q_beta` the plain `beta`-quantile of the batch.
//!
//! [`static_cem_run`] is the classic rare-event sampler with a fixed target level.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::risk::{quantile, weighted_quantile};
use crate::rng::RandomStream;
use crate::taskdist::{importance_weight, Task, TaskDistribution};

/// Sampler state. Immutable: [`CemState::update`] returns the next state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemState {
    pub phi0: TaskDistribution,
    pub phi: TaskDistribution,
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
    /// Last importance-weighted reference quantile, `None` before the first update.
    pub reference_quantile_estimate: Option<f64>,
    /// Number of updates that selected nothing and left `phi` unchanged.
    pub empty_selections: usize,
}

/// One sampled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CemBatch {
    pub tasks: Vec<Task>,
    /// Raw density ratios `D_phi0(z) / D_phi(z)`; exactly 1 for tasks drawn from `phi0`.
    pub weights: Vec<f64>,
    pub from_original: Vec<bool>,
}

/// Diagnostics of one sampler update; one row of the sampler trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemUpdate {
    pub q_alpha_hat: f64,
    pub q_beta: f64,
    pub threshold: f64,
    pub n_selected: usize,
    pub updated: bool,
    pub mean_sample_return: f64,
    pub mean_reference_return: f64,
    pub cvar_reference_return: f64,
}

impl CemState {
    pub fn new(phi0: TaskDistribution, alpha: f64, beta: f64, nu: f64) -> Result<Self> {
        phi0.validate()?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(domain(format!("beta must lie in (0, 1], got {beta}")));
        }
        // nu = 1 is a degenerate all-original sampler, kept for testing.
        if !(0.0..=1.0).contains(&nu) {
            return Err(domain(format!("nu must lie in [0, 1), got {nu}")));
        }
        Ok(CemState {
            phi: phi0.clone(),
            phi0,
            alpha,
            beta,
            nu,
            reference_quantile_estimate: None,
            empty_selections: 0,
        })
    }

    /// `(N_o, N_s) = (floor(nu n), ceil((1 - nu) n))`.
    pub fn split(&self, n: usize) -> (usize, usize) {
        let n_original = ((self.nu * n as f64).floor() as usize).min(n);
        (n_original, n - n_original)
    }

    /// Draws `N_o` tasks from `phi0` followed by `N_s` tasks from `phi`.
    pub fn sample_batch(&self, n: usize, rng: &mut RandomStream) -> Result<CemBatch> {
        if n == 0 {
            return Err(domain("batch size must be at least 1"));
        }
        let (n_original, n_sampled) = self.split(n);
        let mut tasks = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut from_original = Vec::with_capacity(n);
        for _ in 0..n_original {
            tasks.push(self.phi0.sample_one(rng));
            weights.push(1.0);
            from_original.push(true);
        }
        for _ in 0..n_sampled {
            let z = self.phi.sample_one(rng);
            weights.push(importance_weight(&self.phi0, &self.phi, &z)?);
            tasks.push(z);
            from_original.push(false);
        }
        Ok(CemBatch { tasks, weights, from_original })
    }

    /// Scores the batch against the reference quantile and refits `phi`.
    pub fn update(&self, tasks: &[Task], weights: &[f64], returns: &[f64]) -> Result<(CemState, CemUpdate)> {
        if tasks.len() != weights.len() || tasks.len() != returns.len() {
            return Err(Error::Shape(format!(
                "{} tasks, {} weights, {} returns",
                tasks.len(),
                weights.len(),
                returns.len()
            )));
        }
        let q_alpha_hat = weighted_quantile(returns, weights, self.alpha)?;
        let q_beta = quantile(returns, self.beta)?;
        let threshold = q_alpha_hat.max(q_beta);
        let selected: Vec<(Task, f64)> = tasks
            .iter()
            .zip(weights)
            .zip(returns)
            .filter(|(_, &r)| r <= threshold)
            .map(|((z, &w), _)| (z.clone(), w))
            .collect();
        let n_selected = selected.len();

        let mut next = self.clone();
        next.reference_quantile_estimate = Some(q_alpha_hat);
        let updated = match self.phi.ce_update(&selected) {
            Ok(phi) => {
                next.phi = phi;
                true
            }
            // All selected weights vanished numerically; same treatment as an empty selection.
            Err(Error::EmptySelection) | Err(Error::ParameterDomain(_)) => {
                next.empty_selections += 1;
                false
            }
            Err(e) => return Err(e),
        };

        let wsum: f64 = weights.iter().sum();
        let stats = CemUpdate {
            q_alpha_hat,
            q_beta,
            threshold,
            n_selected,
            updated,
            mean_sample_return: returns.iter().sum::<f64>() / returns.len() as f64,
            mean_reference_return: returns.iter().zip(weights).map(|(r, w)| r * w).sum::<f64>() / wsum,
            cvar_reference_return: weighted_tail_mean(returns, weights, q_alpha_hat),
        };
        Ok((next, stats))
    }
}

/// Weighted mean of the returns at or below `q`.
fn weighted_tail_mean(returns: &[f64], weights: &[f64], q: f64) -> f64 {
    let (num, den) = returns
        .iter()
        .zip(weights)
        .filter(|(r, _)| **r <= q)
        .fold((0.0, 0.0), |(n, d), (r, w)| (n + r * w, d + w));
    if den > 0.0 {
        num / den
    } else {
        q
    }
}

/// One iteration of [`static_cem_run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticCemRecord {
    pub iteration: usize,
    /// Sampler after this iteration's update.
    pub state: CemState,
    /// `phi` the batch was drawn from.
    pub sampled_from: TaskDistribution,
    pub threshold: f64,
    pub n_selected: usize,
    /// Fraction of this iteration's batch with score at or below the target level.
    pub fraction_at_target: f64,
}

/// Rare-event CEM with a fixed target level `target` on `score`.
///
/// Each iteration draws `n` tasks from `phi`, sets `q' = max(target, q_beta)`
/// and refits `phi` to the importance-weighted tasks with score at or below `q'`.
pub fn static_cem_run(
    phi0: &TaskDistribution,
    score: impl Fn(&Task) -> f64,
    target: f64,
    n: usize,
    beta: f64,
    iterations: usize,
    rng: &mut RandomStream,
) -> Result<Vec<StaticCemRecord>> {
    if iterations == 0 {
        return Err(domain("static CEM needs at least one iteration"));
    }
    let mut state = CemState::new(phi0.clone(), 1.0, beta, 0.0)?;
    let mut trace = Vec::with_capacity(iterations);
    for iteration in 0..iterations {
        let batch = state.sample_batch(n, rng)?;
        let scores: Vec<f64> = batch.tasks.iter().map(&score).collect();
        let threshold = target.max(quantile(&scores, beta)?);
        let selected: Vec<(Task, f64)> = batch
            .tasks
            .iter()
            .zip(&batch.weights)
            .zip(&scores)
            .filter(|(_, &s)| s <= threshold)
            .map(|((z, &w), _)| (z.clone(), w))
            .collect();
        let sampled_from = state.phi.clone();
        let n_selected = selected.len();
        match state.phi.ce_update(&selected) {
            Ok(phi) => state.phi = phi,
            Err(Error::EmptySelection) | Err(Error::ParameterDomain(_)) => state.empty_selections += 1,
            Err(e) => return Err(e),
        }
        let fraction_at_target = scores.iter().filter(|&&s| s <= target).count() as f64 / n as f64;
        trace.push(StaticCemRecord {
            iteration,
            state: state.clone(),
            sampled_from,
            threshold,
            n_selected,
            fraction_at_target,
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn exp(rate: f64) -> TaskDistribution {
        TaskDistribution::exponential(rate).unwrap()
    }

    #[test]
    fn batch_split_without_regularization() {
        let mut s = CemState::new(exp(0.1), 0.05, 0.2, 0.0).unwrap();
        s.phi = exp(0.05);
        let b = s.sample_batch(16, &mut stream(1, &[])).unwrap();
        assert_eq!(b.tasks.len(), 16);
        assert!(b.from_original.iter().all(|o| !o));
        for (z, w) in b.tasks.iter().zip(&b.weights) {
            let ratio = exp(0.1).density(z) / exp(0.05).density(z);
            assert!((w - ratio).abs() < 1e-12 * ratio);
        }
    }

    #[test]
    fn batch_split_with_regularization() {
        let mut s = CemState::new(exp(0.1), 0.05, 0.2, 0.2).unwrap();
        s.phi = exp(0.3);
        assert_eq!(s.split(10), (2, 8));
        let b = s.sample_batch(10, &mut stream(2, &[])).unwrap();
        assert_eq!(b.from_original.iter().filter(|o| **o).count(), 2);
        assert!(b.from_original[..2].iter().all(|o| *o));
        assert_eq!(&b.weights[..2], &[1.0, 1.0]);
        // floor/ceil split always sums to n
        for n in 1..50 {
            for &nu in &[0.0, 0.1, 0.2, 0.3, 0.7, 0.99] {
                let s = CemState::new(exp(0.1), 0.05, 0.2, nu).unwrap();
                let (o, r) = s.split(n);
                assert_eq!(o + r, n);
                assert_eq!(o, (nu * n as f64).floor() as usize);
            }
        }
    }

    #[test]
    fn unshifted_sampler_has_unit_weights_and_matches_plain_sampling() {
        let s = CemState::new(exp(0.1), 0.05, 0.2, 0.0).unwrap();
        let b = s.sample_batch(32, &mut stream(3, &[])).unwrap();
        assert!(b.weights.iter().all(|&w| w == 1.0));
        let plain = exp(0.1).sample(&mut stream(3, &[]), 32).unwrap();
        assert_eq!(b.tasks, plain);
    }

    #[test]
    fn all_original_when_nu_is_one() {
        let mut s = CemState::new(exp(0.1), 0.05, 0.2, 1.0).unwrap();
        s.phi = exp(3.0);
        let b = s.sample_batch(20, &mut stream(4, &[])).unwrap();
        assert!(b.from_original.iter().all(|o| *o));
        assert!(b.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn beta_floor_selects_enough() {
        let s = CemState::new(exp(0.1), 0.05, 0.2, 0.0).unwrap();
        let tasks: Vec<Task> = (0..10).map(|i| Task::scalar(i as f64 + 1.0)).collect();
        let returns: Vec<f64> = (0..10).map(|i| -(i as f64)).collect();
        let (_, u) = s.update(&tasks, &[1.0; 10], &returns).unwrap();
        assert!(u.n_selected >= 2);
        assert_eq!(u.q_beta, -8.0);
        assert_eq!(u.q_alpha_hat, -9.0);
        assert_eq!(u.threshold, -8.0);
    }

    #[test]
    fn selection_never_smaller_than_beta_tail() {
        let mut rng = stream(5, &[]);
        use rand::Rng;
        for _ in 0..200 {
            let mut s = CemState::new(exp(0.1), 0.05, 0.2, 0.0).unwrap();
            s.phi = exp(rng.random_range(0.02..0.5));
            let b = s.sample_batch(40, &mut rng).unwrap();
            let returns: Vec<f64> = b.tasks.iter().map(|z| -z.first() + rng.random_range(-3.0..3.0)).collect();
            let (_, u) = s.update(&b.tasks, &b.weights, &returns).unwrap();
            let q_beta = quantile(&returns, 0.2).unwrap();
            assert!(u.n_selected >= returns.iter().filter(|&&r| r <= q_beta).count());
        }
    }

    #[test]
    fn harder_tasks_pull_rate_down() {
        // return decreases with rain, so the selected tail holds the largest tau
        let s = CemState::new(exp(0.1), 0.01, 0.2, 0.0).unwrap();
        let b = s.sample_batch(200, &mut stream(6, &[])).unwrap();
        let returns: Vec<f64> = b.tasks.iter().map(|z| -z.first()).collect();
        let (next, u) = s.update(&b.tasks, &b.weights, &returns).unwrap();
        let (sw, swz) = b
            .tasks
            .iter()
            .zip(&b.weights)
            .zip(&returns)
            .filter(|(_, &r)| r <= u.threshold)
            .fold((0.0, 0.0), |(a, c), ((z, w), _)| (a + w, c + w * z.first()));
        let expected = sw / swz;
        let rate = next.phi.params()[0];
        assert!((rate - expected).abs() < 1e-12 * expected);
        assert!(rate < 0.1);
    }

    #[test]
    fn equal_returns_refit_towards_original() {
        // the weights have finite variance only while the sampling rate is below 0.2
        let mut s = CemState::new(exp(0.1), 0.05, 0.2, 0.0).unwrap();
        s.phi = exp(0.15);
        let b = s.sample_batch(50_000, &mut stream(7, &[])).unwrap();
        let (next, u) = s.update(&b.tasks, &b.weights, &vec![1.0; b.tasks.len()]).unwrap();
        assert_eq!(u.n_selected, b.tasks.len());
        let rate = next.phi.params()[0];
        assert!((rate - 0.1).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn selection_always_holds_positive_weight() {
        // the weighted quantile is an atom with positive weight, so refits never starve
        let mut s = CemState::new(exp(0.1), 0.05, 0.2, 0.0).unwrap();
        s.phi = exp(0.2);
        let tasks = vec![Task::scalar(1.0), Task::scalar(2.0)];
        let (next, u) = s.update(&tasks, &[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert!(u.updated);
        assert_eq!(u.q_alpha_hat, 1.0);
        assert_eq!(next.empty_selections, 0);
        assert!((next.phi.params()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn importance_weighted_mean_is_unbiased() {
        let phi0 = exp(0.1);
        for &rate in &[0.05, 0.08, 0.15] {
            let mut s = CemState::new(phi0.clone(), 0.05, 0.2, 0.0).unwrap();
            s.phi = exp(rate);
            let b = s.sample_batch(100_000, &mut stream(8, &[(rate * 1e6) as u64])).unwrap();
            let xs: Vec<f64> = b.tasks.iter().zip(&b.weights).map(|(z, w)| w * z.first()).collect();
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let se = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            assert!((m - 10.0).abs() < 3.0 * se, "rate {rate}: {m} ± {se}");
        }
    }

    #[test]
    fn static_run_full_selection_is_plain_refit() {
        let phi0 = exp(0.1);
        let trace = static_cem_run(&phi0, |_| 0.0, -1.0, 500, 1.0, 1, &mut stream(9, &[])).unwrap();
        let tasks = phi0.sample(&mut stream(9, &[]), 500).unwrap();
        let sel: Vec<(Task, f64)> = tasks.into_iter().map(|t| (t, 1.0)).collect();
        assert_eq!(trace[0].state.phi, phi0.ce_update(&sel).unwrap());
        assert_eq!(trace[0].n_selected, 500);
    }

    #[test]
    fn static_run_with_full_batches_stays_near_original() {
        let phi0 = exp(0.1);
        let trace = static_cem_run(&phi0, |z| z.first(), -1.0, 5000, 1.0, 10, &mut stream(10, &[])).unwrap();
        for r in &trace {
            let rate = r.state.phi.params()[0];
            assert!((rate - 0.1).abs() < 0.01, "iteration {}: {rate}", r.iteration);
        }
    }

    #[test]
    fn static_run_converges_to_cross_entropy_optimum() {
        // Score z on Exp(0.1) with the 1% quantile as target. The closest
        // exponential to the truncated tail has mean E[z | z <= q].
        let rate0: f64 = 0.1;
        let q = -(0.99f64).ln() / rate0;
        let trunc_mean = 1.0 / rate0 - q * (-rate0 * q).exp() / (1.0 - (-rate0 * q).exp());
        let optimum = 1.0 / trunc_mean;
        let trace = static_cem_run(&exp(rate0), |z| z.first(), q, 2000, 0.2, 20, &mut stream(12, &[])).unwrap();
        let tail: Vec<f64> = trace[10..].iter().map(|r| r.state.phi.params()[0]).collect();
        let mean_rate = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((mean_rate - optimum).abs() / optimum < 0.05, "{mean_rate} vs {optimum}");
        let coverage = 1.0 - (-optimum * q).exp();
        assert!((coverage - (1.0 - (-2.0f64).exp())).abs() < 0.01);
    }
}
