//! Meta-training loops: risk-neutral baseline, CVaR-ML, RoML and the naive
//! hard-task sampler.
//!
//! All four share one loop over a [`TrainingProblem`], which supplies data
//! collection, scoring and the learner step. The RL problem wraps a
//! meta-MDP and a [`MetaLearner`]; the sine regression track implements the
//! same trait with losses negated into scores.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cem::{CemState, CemUpdate};
use crate::error::{domain, Error, Result};
use crate::learner::{MetaLearner, PgConfig, PgLearner, Policy};
use crate::metamdp::{rollout, MetaMdp, MetaRollout};
use crate::risk::{cvar, quantile, tail_count};
use crate::rng::{stream, RandomStream, TAG_EVAL, TAG_INIT, TAG_ROLLOUT, TAG_TASKS};
use crate::stats::mean_ci95;
use crate::taskdist::{Task, TaskDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Baseline,
    CvarMl,
    Roml,
    NaiveSampler,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Baseline, Algorithm::CvarMl, Algorithm::Roml, Algorithm::NaiveSampler];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Baseline => "baseline",
            Algorithm::CvarMl => "cvar_ml",
            Algorithm::Roml => "roml",
            Algorithm::NaiveSampler => "naive_sampler",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
    /// Tasks per batch `N`.
    pub n_tasks: usize,
    /// Rollouts per task `M`; RoML always uses one.
    pub m_rollouts: usize,
    pub iterations: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub eval_tasks: usize,
    pub final_eval_tasks: usize,
    /// Tasks seen before the naive sampler freezes its memory.
    pub naive_memory: usize,
    /// Keep the RoML sampler at its initial parameters.
    pub freeze_sampler: bool,
    /// Worker threads for data collection and evaluation. Results do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Baseline,
            alpha: 0.05,
            beta: 0.2,
            nu: 0.0,
            n_tasks: 16,
            m_rollouts: 1,
            iterations: 100,
            seed: 0,
            eval_every: 25,
            eval_tasks: 1000,
            final_eval_tasks: 3000,
            naive_memory: 100,
            freeze_sampler: false,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.nu >= 0.0 && self.nu < 1.0) {
            return bad(format!("nu must lie in [0, 1), got {}", self.nu));
        }
        if self.n_tasks == 0 || self.m_rollouts == 0 {
            return bad("n_tasks and m_rollouts must be at least 1".into());
        }
        if self.eval_every == 0 || self.eval_tasks == 0 || self.final_eval_tasks == 0 {
            return bad("eval_every, eval_tasks and final_eval_tasks must be at least 1".into());
        }
        if self.algorithm == Algorithm::NaiveSampler && self.alpha * (self.naive_memory as f64) < 1.0 - 1e-9 {
            return bad(format!(
                "naive sampler needs alpha * naive_memory >= 1, got {} * {}",
                self.alpha, self.naive_memory
            ));
        }
        Ok(())
    }

    /// The same run under another algorithm.
    pub fn with_algorithm(&self, algorithm: Algorithm) -> Self {
        TrainConfig { algorithm, ..self.clone() }
    }
}

/// Scores of fresh tasks from the original distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean: f64,
    pub cvar: f64,
    pub tasks: Vec<Task>,
    pub scores: Vec<f64>,
    /// Problem-specific metrics, named by [`TrainingProblem::extra_names`].
    pub extras: Vec<f64>,
}

/// What the meta-algorithms need from a learning problem.
pub trait TrainingProblem: Sync {
    type Sample: Send;

    /// Gathers one unit of training data (a meta-rollout, a support/query set) on `task`.
    fn collect(&self, task: &Task, rng: &mut RandomStream) -> Self::Sample;
    /// Higher is better: a return, or a negated loss.
    fn score(&self, sample: &Self::Sample) -> f64;
    /// Environment steps or data points consumed by a sample.
    fn frames(&self, sample: &Self::Sample) -> usize;
    /// The learner's update on the given batch.
    fn learn(&mut self, samples: &[Self::Sample]) -> Result<()>;
    /// Names of the extra evaluation metrics.
    fn extra_names(&self) -> Vec<String> {
        Vec::new()
    }
    /// Test-time score of one task plus that task's extra metrics.
    fn evaluate_task(&self, task: &Task, rng: &mut RandomStream) -> (f64, Vec<f64>);
    /// Combines per-task extras into run-level extras (default: mean).
    fn summarize_extras(&self, per_task: &[Vec<f64>], _alpha: f64) -> Vec<f64> {
        let k = self.extra_names().len();
        (0..k).map(|j| per_task.iter().map(|e| e[j]).sum::<f64>() / per_task.len().max(1) as f64).collect()
    }
    /// Cheap fingerprint of the learned parameters.
    fn checksum(&self) -> f64;
}

/// Runs `f(i)` for `i in 0..n` on up to `threads` workers; output order is `i`.
pub fn parallel_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = threads.max(1).min(n.max(1));
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let f = &f;
                s.spawn(move || (t * chunk..((t + 1) * chunk).min(n)).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Evaluates `problem` on `n` tasks drawn from `dist`, one sample each.
pub fn evaluate<P: TrainingProblem>(
    problem: &P,
    dist: &TaskDistribution,
    n: usize,
    alpha: f64,
    seed: u64,
    path: &[u64],
    threads: usize,
) -> Result<Evaluation> {
    let mut task_path = path.to_vec();
    task_path.push(0);
    let tasks = dist.sample(&mut stream(seed, &task_path), n)?;
    let results = parallel_map(n, threads, |i| {
        let mut p = path.to_vec();
        p.extend([1, i as u64]);
        problem.evaluate_task(&tasks[i], &mut stream(seed, &p))
    });
    let scores: Vec<f64> = results.iter().map(|r| r.0).collect();
    let extras: Vec<Vec<f64>> = results.into_iter().map(|r| r.1).collect();
    Ok(Evaluation {
        mean: scores.iter().sum::<f64>() / n as f64,
        cvar: cvar(&scores, alpha)?,
        extras: problem.summarize_extras(&extras, alpha),
        tasks,
        scores,
    })
}

/// Evaluation numbers kept in the per-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub mean: f64,
    pub cvar: f64,
    pub extras: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: usize,
    /// Cumulative frames after this iteration.
    pub frames: usize,
    pub train_mean_score: f64,
    /// Tasks whose samples reached the learner.
    pub n_selected: usize,
    /// Samples handed to the learner.
    pub n_learned: usize,
    /// Parameters of the distribution the batch was drawn from.
    pub phi: Vec<f64>,
    pub eval: Option<EvalPoint>,
    pub checksum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerRecord {
    pub iteration: usize,
    /// Sampler parameters after the update.
    pub phi: Vec<f64>,
    pub update: CemUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub algorithm: Algorithm,
    pub extra_names: Vec<String>,
    pub records: Vec<TrainRecord>,
    pub sampler: Vec<SamplerRecord>,
    pub naive_memory: Vec<Task>,
    pub final_eval: Evaluation,
    pub wall_time_secs: f64,
}

impl TrainTrace {
    pub fn total_frames(&self) -> usize {
        self.records.last().map_or(0, |r| r.frames)
    }

    /// Records carrying an evaluation, as `(iteration, point)`.
    pub fn eval_curve(&self) -> Vec<(usize, &EvalPoint)> {
        self.records.iter().filter_map(|r| r.eval.as_ref().map(|e| (r.iteration, e))).collect()
    }

    /// First evaluated iteration whose CVaR reaches `threshold`.
    pub fn iterations_to_cvar(&self, threshold: f64) -> Option<usize> {
        self.eval_curve().into_iter().find(|(_, e)| e.cvar >= threshold).map(|(i, _)| i)
    }

    /// Largest value of the first sampler parameter over training.
    pub fn max_phi(&self, index: usize) -> Option<f64> {
        self.records.iter().map(|r| r.phi[index]).reduce(f64::max)
    }

    pub fn min_phi(&self, index: usize) -> Option<f64> {
        self.records.iter().map(|r| r.phi[index]).reduce(f64::min)
    }
}

enum Sampler {
    Fixed,
    Cem(CemState),
    Naive { pool: Vec<(Task, f64)>, memory: Vec<Task>, capacity: usize, keep: usize },
}

/// Runs the configured meta-algorithm on `problem`, with tasks from `dist0`.
pub fn train<P: TrainingProblem>(problem: &mut P, dist0: &TaskDistribution, config: &TrainConfig) -> Result<TrainTrace> {
    config.validate()?;
    dist0.validate()?;
    let start = Instant::now();
    let seed = config.seed;
    let mut sampler = match config.algorithm {
        Algorithm::Roml => Sampler::Cem(CemState::new(dist0.clone(), config.alpha, config.beta, config.nu)?),
        Algorithm::NaiveSampler => Sampler::Naive {
            pool: Vec::new(),
            memory: Vec::new(),
            capacity: config.naive_memory,
            keep: tail_count(config.naive_memory, config.alpha),
        },
        _ => Sampler::Fixed,
    };
    let m = if config.algorithm == Algorithm::Roml { 1 } else { config.m_rollouts };
    let n = config.n_tasks;
    let mut records = Vec::with_capacity(config.iterations);
    let mut sampler_trace = Vec::new();
    let mut frames = 0usize;

    for it in 0..config.iterations {
        let mut task_rng = stream(seed, &[TAG_TASKS, it as u64]);
        let (tasks, weights, phi) = match &sampler {
            Sampler::Fixed => (dist0.sample(&mut task_rng, n)?, vec![1.0; n], dist0.params()),
            Sampler::Cem(state) => {
                let b = state.sample_batch(n, &mut task_rng)?;
                (b.tasks, b.weights, state.phi.params())
            }
            Sampler::Naive { memory, .. } => {
                let tasks = (0..n)
                    .map(|_| {
                        if memory.is_empty() {
                            dist0.sample_one(&mut task_rng)
                        } else {
                            memory[task_rng.random_range(0..memory.len())].clone()
                        }
                    })
                    .collect();
                (tasks, vec![1.0; n], dist0.params())
            }
        };

        let problem_ref = &*problem;
        let samples: Vec<Vec<P::Sample>> = parallel_map(n, config.threads, |i| {
            (0..m)
                .map(|j| problem_ref.collect(&tasks[i], &mut stream(seed, &[TAG_ROLLOUT, it as u64, i as u64, j as u64])))
                .collect()
        });
        let scores: Vec<f64> = samples
            .iter()
            .map(|s| s.iter().map(|x| problem.score(x)).sum::<f64>() / s.len() as f64)
            .collect();
        frames += samples.iter().flatten().map(|s| problem.frames(s)).sum::<usize>();

        let selected: Vec<bool> = if config.algorithm == Algorithm::CvarMl {
            let q = quantile(&scores, config.alpha)?;
            scores.iter().map(|&r| r <= q).collect()
        } else {
            vec![true; n]
        };
        let n_selected = selected.iter().filter(|s| **s).count();
        let batch: Vec<P::Sample> = samples
            .into_iter()
            .zip(&selected)
            .filter(|(_, keep)| **keep)
            .flat_map(|(s, _)| s)
            .collect();
        let n_learned = batch.len();
        problem.learn(&batch)?;
        drop(batch);

        match &mut sampler {
            Sampler::Cem(state) if !config.freeze_sampler => {
                let (next, update) = state.update(&tasks, &weights, &scores)?;
                *state = next;
                sampler_trace.push(SamplerRecord { iteration: it, phi: state.phi.params(), update });
            }
            Sampler::Naive { pool, memory, capacity, keep } if memory.is_empty() => {
                for (z, r) in tasks.iter().zip(&scores) {
                    if pool.len() < *capacity {
                        pool.push((z.clone(), *r));
                    }
                }
                if pool.len() >= *capacity {
                    let mut ranked = pool.clone();
                    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
                    *memory = ranked.into_iter().take(*keep).map(|(z, _)| z).collect();
                }
            }
            _ => {}
        }

        let eval = if (it + 1) % config.eval_every == 0 {
            let e = evaluate(&*problem, dist0, config.eval_tasks, config.alpha, seed, &[TAG_EVAL, it as u64], config.threads)?;
            Some(EvalPoint { mean: e.mean, cvar: e.cvar, extras: e.extras })
        } else {
            None
        };
        records.push(TrainRecord {
            iteration: it,
            frames,
            train_mean_score: scores.iter().sum::<f64>() / n as f64,
            n_selected,
            n_learned,
            phi,
            eval,
            checksum: problem.checksum(),
        });
    }

    let final_eval = evaluate(&*problem, dist0, config.final_eval_tasks, config.alpha, seed, &[TAG_EVAL, u64::MAX], config.threads)?;
    let naive_memory = match sampler {
        Sampler::Naive { memory, .. } => memory,
        _ => Vec::new(),
    };
    Ok(TrainTrace {
        algorithm: config.algorithm,
        extra_names: problem.extra_names(),
        records,
        sampler: sampler_trace,
        naive_memory,
        final_eval,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn run_baseline<P: TrainingProblem>(problem: &mut P, dist0: &TaskDistribution, config: &TrainConfig) -> Result<TrainTrace> {
    train(problem, dist0, &config.with_algorithm(Algorithm::Baseline))
}

pub fn run_cvar_ml<P: TrainingProblem>(problem: &mut P, dist0: &TaskDistribution, config: &TrainConfig) -> Result<TrainTrace> {
    train(problem, dist0, &config.with_algorithm(Algorithm::CvarMl))
}

pub fn run_roml<P: TrainingProblem>(problem: &mut P, dist0: &TaskDistribution, config: &TrainConfig) -> Result<TrainTrace> {
    train(problem, dist0, &config.with_algorithm(Algorithm::Roml))
}

pub fn run_naive_sampler<P: TrainingProblem>(problem: &mut P, dist0: &TaskDistribution, config: &TrainConfig) -> Result<TrainTrace> {
    train(problem, dist0, &config.with_algorithm(Algorithm::NaiveSampler))
}

// ---------------------------------------------------------------------------
// RL problem

/// How to build the meta-policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Tabular,
    Dense { hidden: Vec<usize> },
}

impl PolicySpec {
    pub fn build(&self, env: &dyn MetaMdp, seed: u64) -> Policy {
        match self {
            PolicySpec::Tabular => Policy::tabular(env),
            PolicySpec::Dense { hidden } => Policy::dense(env, hidden, &mut stream(seed, &[TAG_INIT])),
        }
    }
}

/// A meta-MDP together with the learner trained on it.
pub struct RlProblem<'a, L> {
    pub env: &'a dyn MetaMdp,
    pub learner: L,
}

impl<'a> RlProblem<'a, PgLearner> {
    pub fn with_pg(env: &'a dyn MetaMdp, policy: &PolicySpec, pg: PgConfig, seed: u64) -> Result<Self> {
        Ok(RlProblem { env, learner: PgLearner::new(policy.build(env, seed), pg)? })
    }
}

impl<L: MetaLearner + Sync> TrainingProblem for RlProblem<'_, L> {
    type Sample = MetaRollout;

    fn collect(&self, task: &Task, rng: &mut RandomStream) -> MetaRollout {
        rollout(self.env, task, self.learner.policy(), rng)
    }
    fn score(&self, sample: &MetaRollout) -> f64 {
        sample.ret
    }
    fn frames(&self, sample: &MetaRollout) -> usize {
        sample.frames()
    }
    fn learn(&mut self, samples: &[MetaRollout]) -> Result<()> {
        self.learner.ml_step(self.env, samples)
    }
    fn extra_names(&self) -> Vec<String> {
        vec!["hazard_rate".into()]
    }
    fn evaluate_task(&self, task: &Task, rng: &mut RandomStream) -> (f64, Vec<f64>) {
        let r = rollout(self.env, task, self.learner.policy(), rng);
        let rate = r.flagged_episodes() as f64 / r.episodes.len() as f64;
        (r.ret, vec![rate])
    }
    fn checksum(&self) -> f64 {
        self.learner.policy().params().iter().sum()
    }
}

// ---------------------------------------------------------------------------
// Variance harness

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub alpha: f64,
    pub tail_threshold: f64,
    /// `E_D[G]` with `G = alpha^-1 1{tail} g`, estimated.
    pub mean_original: Vec<f64>,
    /// `E_{D_alpha}[g]`, estimated.
    pub mean_tail: Vec<f64>,
    /// Largest per-entry `|difference| / standard error`.
    pub max_mean_z: f64,
    pub var_original: f64,
    pub var_tail: f64,
    /// `Var_{D_alpha}(alpha G) / Var_D(G)`, with a 95% interval over batches.
    pub ratio: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
}

/// Empirical variance-reduction check for a frozen policy.
///
/// A pool of tasks from `dist` is ranked by Monte-Carlo value estimates; the
/// lowest `alpha` fraction is the empirical tail. `G` samples are drawn with
/// tasks uniform over the pool, `g` samples with tasks uniform over the tail.
#[allow(clippy::too_many_arguments)]
pub fn variance_harness(
    env: &dyn MetaMdp,
    policy: &Policy,
    dist: &TaskDistribution,
    alpha: f64,
    pool: usize,
    value_rollouts: usize,
    n_batches: usize,
    batch_size: usize,
    baseline: f64,
    seed: u64,
) -> Result<VarianceReport> {
    if !(alpha > 0.0 && alpha <= 1.0) || pool == 0 || value_rollouts == 0 || n_batches < 2 || batch_size == 0 {
        return Err(domain("variance harness needs alpha in (0, 1], positive sizes and at least two batches"));
    }
    let tasks = dist.sample(&mut stream(seed, &[TAG_TASKS]), pool)?;
    let values: Vec<f64> = tasks
        .iter()
        .enumerate()
        .map(|(i, z)| {
            (0..value_rollouts)
                .map(|j| rollout(env, z, policy, &mut stream(seed, &[TAG_EVAL, i as u64, j as u64])).ret)
                .sum::<f64>()
                / value_rollouts as f64
        })
        .collect();
    let threshold = quantile(&values, alpha)?;
    let in_tail: Vec<bool> = values.iter().map(|&v| v <= threshold).collect();
    let tail: Vec<usize> = (0..pool).filter(|&i| in_tail[i]).collect();
    // the realized tail mass may exceed alpha when values tie
    let mass = tail.len() as f64 / pool as f64;

    let dim = policy.n_params();
    let draw = |from_tail: bool, b: usize, k: usize| -> Vec<f64> {
        let mut rng = stream(seed, &[TAG_ROLLOUT, from_tail as u64, b as u64, k as u64]);
        let i = if from_tail { tail[rng.random_range(0..tail.len())] } else { rng.random_range(0..pool) };
        let r = rollout(env, &tasks[i], policy, &mut rng);
        let mut g = vec![0.0; dim];
        let w = if from_tail {
            r.ret - baseline
        } else if in_tail[i] {
            (r.ret - baseline) / mass
        } else {
            return g;
        };
        for tr in r.transitions() {
            policy.accumulate_grad_log_pi(env, &tr.ctx, tr.action, w, &mut g);
        }
        g
    };
    // per batch: mean vector and trace variance for both designs
    let mut stats = [Vec::new(), Vec::new()];
    let mut sums = [vec![0.0; dim], vec![0.0; dim]];
    let mut sq = [vec![0.0; dim], vec![0.0; dim]];
    for (d, from_tail) in [false, true].into_iter().enumerate() {
        for b in 0..n_batches {
            let mut s = vec![0.0; dim];
            let mut s2 = 0.0;
            for k in 0..batch_size {
                let g = draw(from_tail, b, k);
                for j in 0..dim {
                    s[j] += g[j];
                    sums[d][j] += g[j];
                    sq[d][j] += g[j] * g[j];
                }
                s2 += g.iter().map(|x| x * x).sum::<f64>();
            }
            let mean: Vec<f64> = s.iter().map(|x| x / batch_size as f64).collect();
            let var = s2 / batch_size as f64 - mean.iter().map(|x| x * x).sum::<f64>();
            stats[d].push(var);
        }
    }
    let total = (n_batches * batch_size) as f64;
    let mean_of = |d: usize| -> Vec<f64> { sums[d].iter().map(|x| x / total).collect() };
    let (mean_original, mean_tail) = (mean_of(0), mean_of(1));
    let mut max_mean_z: f64 = 0.0;
    for j in 0..dim {
        let se2: f64 = (0..2)
            .map(|d| {
                let m = sums[d][j] / total;
                (sq[d][j] / total - m * m).max(0.0) / total
            })
            .sum();
        let diff = (mean_original[j] - mean_tail[j]).abs();
        if se2 > 0.0 {
            max_mean_z = max_mean_z.max(diff / se2.sqrt());
        } else if diff > 0.0 {
            max_mean_z = f64::INFINITY;
        }
    }
    let var_original = stats[0].iter().sum::<f64>() / n_batches as f64;
    let var_tail = stats[1].iter().sum::<f64>() / n_batches as f64;
    let ratios: Vec<f64> = stats[1].iter().zip(&stats[0]).map(|(t, o)| if *o > 0.0 { t / o } else { 0.0 }).collect();
    let ci = mean_ci95(&ratios)?;
    Ok(VarianceReport {
        alpha,
        tail_threshold: threshold,
        mean_original,
        mean_tail,
        max_mean_z,
        var_original,
        var_tail,
        ratio: if var_original > 0.0 { var_tail / var_original } else { 0.0 },
        ratio_lo: ci.lo,
        ratio_hi: ci.hi,
    })
}
