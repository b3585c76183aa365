//! Brute-force references for the gradient estimators.
//!
//! Objectives here are built from forward action probabilities and exact
//! enumeration only; the estimators under test are evaluated on every
//! enumerated sample and averaged with the exact sample probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::learner::{cvar_ml_gradient, rl_cvar_pg_gradient_at, GradientEstimate, Policy};
use crate::metamdp::{enumerate_rollouts, enumerate_returns, BanditMdp, ChainMdp, EnumerableMdp, MetaMdp, MetaRollout};
use crate::rng::{stream, RandomStream};
use crate::taskdist::Task;

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            probe[j] = x[j] + step;
            let up = f(&probe);
            probe[j] = x[j] - step;
            let dn = f(&probe);
            probe[j] = x[j];
            (up - dn) / (2.0 * step)
        })
        .collect()
}

/// Central differences at `step` and `step / 2` combined by Richardson extrapolation.
pub fn richardson_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let coarse = fd_gradient(&f, x, step);
    let fine = fd_gradient(&f, x, step / 2.0);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

/// Central differences at `step`, switching to Richardson extrapolation from
/// `10 step` when the estimates at `step` and `10 step` disagree noticeably.
pub fn fd_gradient_checked(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let base = fd_gradient(&f, x, step);
    let wide = fd_gradient(&f, x, 10.0 * step);
    let scale = base.iter().map(|v| v.abs()).fold(1e-12, f64::max);
    let drift = base.iter().zip(&wide).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if drift / scale > 1e-6 {
        richardson_gradient(&f, x, 10.0 * step)
    } else {
        base
    }
}

/// Fraction of each item inside the lowest-`alpha` probability mass.
/// Items are ranked by value; the boundary item gets a fractional share.
pub fn tail_fractions(values: &[f64], probs: &[f64], alpha: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut left = alpha;
    let mut h = vec![0.0; values.len()];
    for i in order {
        if left <= 0.0 || probs[i] == 0.0 {
            continue;
        }
        let take = probs[i].min(left);
        h[i] = take / probs[i];
        left -= take;
    }
    h
}

/// CVaR of a finite distribution given as `(probability, value)` atoms.
pub fn atoms_cvar(atoms: &[(f64, f64)], alpha: f64) -> f64 {
    let values: Vec<f64> = atoms.iter().map(|a| a.1).collect();
    let probs: Vec<f64> = atoms.iter().map(|a| a.0).collect();
    let h = tail_fractions(&values, &probs, alpha);
    atoms.iter().zip(&h).map(|((p, v), h)| p * h * v).sum::<f64>() / alpha
}

/// Smallest atom value whose cumulative probability reaches `alpha`.
pub fn atoms_quantile(atoms: &[(f64, f64)], alpha: f64) -> f64 {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut acc = 0.0;
    for (p, v) in &sorted {
        acc += p;
        if acc >= alpha - 1e-15 {
            return *v;
        }
    }
    sorted.last().map(|a| a.1).unwrap_or(f64::NAN)
}

/// Exact expected return of `policy` on `task`.
pub fn exact_task_value(env: &dyn EnumerableMdp, task: &Task, policy: &Policy) -> Result<f64> {
    Ok(enumerate_returns(env, task, policy)?.iter().map(|(p, r)| p * r).sum())
}

/// CVaR over tasks of the exact task values: the probability-weighted mean of
/// the lowest-value `alpha` mass of tasks.
pub fn exact_cvar_meta_objective(env: &dyn EnumerableMdp, tasks: &[(f64, Task)], policy: &Policy, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let values = tasks.iter().map(|(_, z)| exact_task_value(env, z, policy)).collect::<Result<Vec<_>>>()?;
    let atoms: Vec<(f64, f64)> = tasks.iter().map(|(p, _)| *p).zip(values).collect();
    Ok(atoms_cvar(&atoms, alpha))
}

/// Exact CVaR of the return distribution of a single (non-meta) task.
pub fn exact_rl_cvar_objective(env: &dyn EnumerableMdp, task: &Task, policy: &Policy, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(atoms_cvar(&enumerate_returns(env, task, policy)?, alpha))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(domain(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// Gradient of `objective(policy with theta)` by central differences.
pub fn policy_fd_gradient(policy: &Policy, objective: impl Fn(&Policy) -> f64, step: f64) -> Vec<f64> {
    let theta = policy.params();
    fd_gradient_checked(|t| objective(&policy.with_params(t).expect("same length")), &theta, step)
}

/// Baseline handed to the meta estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetaBaseline {
    Constant { value: f64 },
    /// Exact expectation of the batch mean return, a constant for the step.
    ExpectedBatchMean,
}

/// Which estimator [`estimator_expectation`] averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorConfig {
    /// CVaR meta gradient on a batch of fixed composition with `m` rollouts per task.
    CvarMeta { batch: Vec<Task>, m: usize, alpha: f64, baseline: MetaBaseline },
    /// Ordinary RL CVaR gradient of a single trajectory with a fixed tail threshold.
    RlCvar { task: Task, alpha: f64, threshold: f64, baseline: f64 },
}

/// Exact expectation of an estimator over all sample realizations.
pub fn estimator_expectation(env: &dyn EnumerableMdp, policy: &Policy, config: &EstimatorConfig) -> Result<Vec<f64>> {
    let meta: &dyn MetaMdp = env;
    match config {
        EstimatorConfig::RlCvar { task, alpha, threshold, baseline } => {
            let mut acc = vec![0.0; policy.n_params()];
            for (p, r) in enumerate_rollouts(env, task, policy)? {
                let g = rl_cvar_pg_gradient_at(policy, meta, std::slice::from_ref(&r), *alpha, *threshold, *baseline)?;
                axpy(&mut acc, p, &g.grad);
            }
            Ok(acc)
        }
        EstimatorConfig::CvarMeta { batch, m, alpha, baseline } => {
            if batch.is_empty() || *m == 0 {
                return Err(domain("batch needs at least one task and one rollout"));
            }
            let b = match baseline {
                MetaBaseline::Constant { value } => *value,
                MetaBaseline::ExpectedBatchMean => {
                    let vals = batch.iter().map(|z| exact_task_value(env, z, policy)).collect::<Result<Vec<_>>>()?;
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            };
            // every rollout slot enumerates independently
            let slots: Vec<Vec<(f64, MetaRollout)>> = batch
                .iter()
                .flat_map(|z| std::iter::repeat_n(z, *m))
                .map(|z| enumerate_rollouts(env, z, policy))
                .collect::<Result<_>>()?;
            let required = slots.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128));
            if required > crate::metamdp::ENUMERATION_LIMIT {
                return Err(Error::EnumerationTooLarge { required, limit: crate::metamdp::ENUMERATION_LIMIT });
            }
            let mut acc = vec![0.0; policy.n_params()];
            let mut idx = vec![0usize; slots.len()];
            loop {
                let prob: f64 = idx.iter().zip(&slots).map(|(&i, s)| s[i].0).product();
                let batches: Vec<Vec<MetaRollout>> = (0..batch.len())
                    .map(|t| (0..*m).map(|j| slots[t * m + j][idx[t * m + j]].1.clone()).collect())
                    .collect();
                let g = cvar_ml_gradient(policy, meta, &batches, *alpha, b)?;
                axpy(&mut acc, prob, &g.grad);
                if !odometer(&mut idx, &slots) {
                    break;
                }
            }
            Ok(acc)
        }
    }
}

/// Monte-Carlo counterpart of the meta estimator with tasks drawn i.i.d.
/// from `tasks`, so the sample quantile is noisy. Returns the sample mean.
pub fn estimator_monte_carlo(
    env: &dyn EnumerableMdp,
    policy: &Policy,
    tasks: &[(f64, Task)],
    n: usize,
    alpha: f64,
    baseline: f64,
    samples: usize,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    let meta: &dyn MetaMdp = env;
    let probs: Vec<f64> = tasks.iter().map(|t| t.0).collect();
    let mut acc = vec![0.0; policy.n_params()];
    for _ in 0..samples {
        let batches: Vec<Vec<MetaRollout>> = (0..n)
            .map(|_| {
                let z = &tasks[crate::metamdp::sample_categorical(&probs, rng)].1;
                vec![crate::metamdp::rollout(meta, z, policy, rng)]
            })
            .collect();
        let g: GradientEstimate = cvar_ml_gradient(policy, meta, &batches, alpha, baseline)?;
        axpy(&mut acc, 1.0 / samples as f64, &g.grad);
    }
    Ok(acc)
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

fn odometer<T>(idx: &mut [usize], slots: &[Vec<T>]) -> bool {
    for j in (0..idx.len()).rev() {
        idx[j] += 1;
        if idx[j] < slots[j].len() {
            return true;
        }
        idx[j] = 0;
    }
    false
}

/// Comparison of an estimator expectation against a reference vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub oracle: Vec<f64>,
    pub estimate: Vec<f64>,
    /// Largest per-entry absolute difference.
    pub abs_err: f64,
    /// Euclidean norm of the difference over the norm of the oracle.
    pub rel_err: f64,
    pub tolerance: f64,
    /// Whether `rel_err` or `abs_err` is compared against the tolerance.
    pub relative: bool,
    pub passed: bool,
}

impl OracleReport {
    pub fn compare(name: impl Into<String>, oracle: Vec<f64>, estimate: Vec<f64>, tolerance: f64, relative: bool) -> Self {
        let (abs_err, rel_err) = discrepancy(&oracle, &estimate);
        let err = if relative { rel_err } else { abs_err };
        OracleReport { name: name.into(), oracle, estimate, abs_err, rel_err, tolerance, relative, passed: err <= tolerance }
    }

    /// A pass/fail claim that is not a vector comparison.
    pub fn claim(name: impl Into<String>, lhs: f64, rhs: f64, passed: bool) -> Self {
        let (abs_err, rel_err) = discrepancy(&[lhs], &[rhs]);
        OracleReport {
            name: name.into(),
            oracle: vec![lhs],
            estimate: vec![rhs],
            abs_err,
            rel_err,
            tolerance: 0.0,
            relative: false,
            passed,
        }
    }
}

/// `(max |a - b|, |a - b| / |a|)`.
pub fn discrepancy(oracle: &[f64], estimate: &[f64]) -> (f64, f64) {
    let abs = oracle.iter().zip(estimate).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let diff = oracle.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = oracle.iter().map(|a| a * a).sum::<f64>().sqrt();
    let rel = if norm > 0.0 { diff / norm } else { diff };
    (abs, rel)
}

/// Exact first and second moments behind the variance-reduction claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailVarianceReport {
    pub alpha: f64,
    /// `E_D[G]` with `G = alpha^-1 1{tail} g`.
    pub mean_original: Vec<f64>,
    /// `E_{D_alpha}[alpha G]`, i.e. the plain estimator under the tail distribution.
    pub mean_tail: Vec<f64>,
    /// Trace of `Var_D(G)`.
    pub var_original: f64,
    /// Trace of `Var_{D_alpha}(alpha G)`.
    pub var_tail: f64,
    pub mean_abs_err: f64,
    pub means_agree: bool,
    pub variance_bound_holds: bool,
}

impl TailVarianceReport {
    pub fn passed(&self) -> bool {
        self.means_agree && self.variance_bound_holds
    }
}

/// Exact moments of the single-rollout estimator `g = (R - b) sum grad log pi`
/// under the original and tail task distributions. The tail is identified by
/// exact task values; a task straddling the quantile enters with a Bernoulli
/// share, so the indicator satisfies `E[1^2] = E[1]`.
pub fn tail_variance_report(env: &dyn EnumerableMdp, tasks: &[(f64, Task)], policy: &Policy, alpha: f64, baseline: f64) -> Result<TailVarianceReport> {
    check_alpha(alpha)?;
    let meta: &dyn MetaMdp = env;
    let n = policy.n_params();
    let probs: Vec<f64> = tasks.iter().map(|t| t.0).collect();
    let mut values = Vec::with_capacity(tasks.len());
    // per task: E[g | z] and E[|g|^2 | z]
    let mut first = Vec::with_capacity(tasks.len());
    let mut second = Vec::with_capacity(tasks.len());
    for (_, z) in tasks {
        let mut v = 0.0;
        let mut m1 = vec![0.0; n];
        let mut m2 = 0.0;
        for (p, r) in enumerate_rollouts(env, z, policy)? {
            v += p * r.ret;
            let g = crate::learner::mean_pg_gradient(policy, meta, std::slice::from_ref(&r), baseline)?.grad;
            axpy(&mut m1, p, &g);
            m2 += p * g.iter().map(|x| x * x).sum::<f64>();
        }
        values.push(v);
        first.push(m1);
        second.push(m2);
    }
    let h = tail_fractions(&values, &probs, alpha);

    // original distribution, CVaR-ML weighting
    let mut mean_original = vec![0.0; n];
    let mut sq_original = 0.0;
    for i in 0..tasks.len() {
        axpy(&mut mean_original, probs[i] * h[i] / alpha, &first[i]);
        sq_original += probs[i] * h[i] / (alpha * alpha) * second[i];
    }
    // tail distribution, unweighted estimator
    let tail_probs: Vec<f64> = (0..tasks.len()).map(|i| probs[i] * h[i] / alpha).collect();
    let mut mean_tail = vec![0.0; n];
    let mut sq_tail = 0.0;
    for i in 0..tasks.len() {
        axpy(&mut mean_tail, tail_probs[i], &first[i]);
        sq_tail += tail_probs[i] * second[i];
    }
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let var_original = sq_original - norm2(&mean_original);
    let var_tail = sq_tail - norm2(&mean_tail);
    let mean_abs_err = discrepancy(&mean_original, &mean_tail).0;
    let slack = 1e-12 * (1.0 + var_original.abs());
    Ok(TailVarianceReport {
        alpha,
        means_agree: mean_abs_err <= 1e-8,
        variance_bound_holds: var_tail <= alpha * var_original + slack,
        mean_original,
        mean_tail,
        var_original,
        var_tail,
        mean_abs_err,
    })
}

/// Deliberate defects for checking that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Hand `-b` to the estimators instead of `b`.
    FlipBaselineSign,
}

/// Three-task chain instance with unequal task probabilities and disjoint return ranges.
pub fn canonical_chain() -> (ChainMdp, Vec<(f64, Task)>) {
    let tasks = vec![
        (0.25, ChainMdp::task(0.5, 0.0)),
        (0.25, ChainMdp::task(0.2, 10.0)),
        (0.5, ChainMdp::task(0.0, 20.0)),
    ];
    (ChainMdp::default(), tasks)
}

/// Random tabular policy on `env`.
pub fn random_tabular(env: &dyn MetaMdp, seed: u64) -> Policy {
    let mut p = Policy::tabular(env);
    p.randomize(&mut stream(seed, &[0x0a]), 1.5);
    p
}

/// Bandit for the ordinary RL contrast: the tail threshold falls strictly inside an atom.
pub fn contrast_bandit() -> BanditMdp {
    BanditMdp::new(vec![vec![(0.3, 0.0), (0.7, 2.0)], vec![(0.5, 0.5), (0.5, 1.5)]]).expect("valid arms")
}

/// Baseline-invariance and gradient match of the meta estimator.
pub fn meta_gradient_suite(fault: Option<Fault>) -> Result<Vec<OracleReport>> {
    let (env, tasks) = canonical_chain();
    let policy = random_tabular(&env, 1);
    // batch z1, z2, z3, z3 matches the task probabilities exactly
    let batch: Vec<Task> = vec![tasks[0].1.clone(), tasks[1].1.clone(), tasks[2].1.clone(), tasks[2].1.clone()];
    let sign = if fault == Some(Fault::FlipBaselineSign) { -1.0 } else { 1.0 };
    let mut out = Vec::new();
    for alpha in [0.25, 0.5, 1.0] {
        let fd = policy_fd_gradient(
            &policy,
            |p| exact_cvar_meta_objective(&env, &tasks, p, alpha).expect("enumerable"),
            FD_STEP,
        );
        let expect = |baseline: MetaBaseline| {
            let baseline = match baseline {
                MetaBaseline::Constant { value } => MetaBaseline::Constant { value: sign * value },
                other => other,
            };
            estimator_expectation(&env, &policy, &EstimatorConfig::CvarMeta { batch: batch.clone(), m: 1, alpha, baseline })
        };
        let reference = expect(MetaBaseline::Constant { value: 0.0 })?;
        for (label, b) in [
            ("1", MetaBaseline::Constant { value: 1.0 }),
            ("-5", MetaBaseline::Constant { value: -5.0 }),
            ("expected batch mean", MetaBaseline::ExpectedBatchMean),
        ] {
            out.push(OracleReport::compare(
                format!("meta CVaR gradient, alpha {alpha}: baseline {label} vs 0"),
                reference.clone(),
                expect(b)?,
                1e-8,
                false,
            ));
        }
        out.push(OracleReport::compare(
            format!("meta CVaR gradient, alpha {alpha}: expectation vs finite differences"),
            fd,
            reference,
            1e-5,
            true,
        ));
    }
    Ok(out)
}

/// Ordinary RL CVaR gradient: only the true quantile is a valid baseline.
pub fn rl_contrast_suite(fault: Option<Fault>) -> Result<Vec<OracleReport>> {
    let env = contrast_bandit();
    let policy = random_tabular(&env, 2);
    let task = Task::scalar(0.0);
    let sign = if fault == Some(Fault::FlipBaselineSign) { -1.0 } else { 1.0 };
    let mut out = Vec::new();
    for alpha in [0.2, 1.0] {
        let atoms = enumerate_returns(&env, &task, &policy)?;
        let q = atoms_quantile(&atoms, alpha);
        let fd = policy_fd_gradient(&policy, |p| exact_rl_cvar_objective(&env, &task, p, alpha).expect("enumerable"), FD_STEP);
        let expect = |b: f64| {
            estimator_expectation(
                &env,
                &policy,
                &EstimatorConfig::RlCvar { task: task.clone(), alpha, threshold: q, baseline: sign * b },
            )
        };
        if alpha < 1.0 {
            let matched = OracleReport::compare(format!("RL CVaR gradient, alpha {alpha}: baseline q"), fd.clone(), expect(q)?, 1e-4, true);
            let residual = discrepancy(&fd, &matched.estimate).1;
            out.push(matched);
            for shift in [1.0, -1.0] {
                let shifted = expect(q + shift)?;
                let err = discrepancy(&fd, &shifted).1;
                out.push(OracleReport::claim(
                    format!("RL CVaR gradient, alpha {alpha}: baseline q{shift:+} is biased (error vs 10x residual)"),
                    err,
                    10.0 * residual,
                    err >= 10.0 * residual.max(1e-12),
                ));
            }
        } else {
            let mean: f64 = atoms.iter().map(|(p, r)| p * r).sum();
            out.push(OracleReport::compare(
                "RL CVaR gradient, alpha 1: mean baseline recovers the mean gradient",
                fd,
                expect(mean)?,
                1e-4,
                true,
            ));
        }
    }
    Ok(out)
}

/// Variance-reduction checks on several enumerable instances.
pub fn tail_variance_suite(fault: Option<Fault>) -> Result<Vec<OracleReport>> {
    let sign = if fault == Some(Fault::FlipBaselineSign) { -1.0 } else { 1.0 };
    let env = ChainMdp::default();
    let four: Vec<(f64, Task)> = (0..4).map(|i| (0.25, ChainMdp::task(0.1 * i as f64, 3.0 * i as f64))).collect();
    let (_, three) = canonical_chain();
    let uneven: Vec<(f64, Task)> =
        vec![(0.1, ChainMdp::task(0.9, 0.0)), (0.3, ChainMdp::task(0.5, 0.3)), (0.6, ChainMdp::task(0.1, 0.2))];
    let instances = [("four tasks", four, 3), ("three tasks", three, 4), ("overlapping values", uneven, 5)];
    let mut out = Vec::new();
    for (label, tasks, seed) in instances {
        let policy = random_tabular(&env, seed);
        for alpha in [0.25, 0.5, 1.0] {
            let r = tail_variance_report(&env, &tasks, &policy, alpha, sign * 0.5)?;
            out.push(OracleReport::compare(
                format!("tail estimator mean, {label}, alpha {alpha}"),
                r.mean_original.clone(),
                r.mean_tail.clone(),
                1e-8,
                false,
            ));
            out.push(OracleReport::claim(
                format!("tail estimator variance <= alpha x original, {label}, alpha {alpha}"),
                r.var_tail,
                alpha * r.var_original,
                r.variance_bound_holds,
            ));
        }
    }
    Ok(out)
}

/// Every oracle suite, in a fixed order.
pub fn run_oracle_suite(fault: Option<Fault>) -> Result<Vec<OracleReport>> {
    let mut out = meta_gradient_suite(fault)?;
    out.extend(rl_contrast_suite(fault)?);
    out.extend(tail_variance_suite(fault)?);
    Ok(out)
}
