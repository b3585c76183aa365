//! Sine-wave regression as a supervised meta-learning problem.
//!
//! A small tanh network is meta-trained with first-order MAML: one inner
//! gradient step on a support set, then the query-set gradient at the adapted
//! parameters drives the outer update. Plugged into [`crate::metaalgo::train`]
//! with score = negative post-adaptation query loss.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::optim::{Adam, OptimizerKind};
use crate::metaalgo::{train, Algorithm, TrainConfig, TrainTrace, TrainingProblem};
use crate::risk::cvar;
use crate::rng::{stream, RandomStream, TAG_INIT};
use crate::taskdist::{Task, TaskDistribution};

pub const AMPLITUDE_RANGE: (f64, f64) = (0.1, 5.0);
pub const PHASE_RANGE: (f64, f64) = (0.0, TAU);
pub const FREQUENCY_RANGE: (f64, f64) = (0.3, 3.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineTask {
    pub amplitude: f64,
    pub phase: f64,
    pub frequency: f64,
}

impl SineTask {
    pub fn from_task(task: &Task) -> Result<Self> {
        match task.values() {
            &[amplitude, phase, frequency] => Ok(SineTask { amplitude, phase, frequency }),
            v => Err(Error::Shape(format!("sine task needs 3 values, got {}", v.len()))),
        }
    }

    pub fn to_task(self) -> Task {
        Task(vec![self.amplitude, self.phase, self.frequency])
    }

    pub fn in_range(&self) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        within(self.amplitude, AMPLITUDE_RANGE) && within(self.phase, PHASE_RANGE) && within(self.frequency, FREQUENCY_RANGE)
    }

    pub fn target(&self, x: f64) -> f64 {
        self.amplitude * (self.frequency * x + self.phase).sin()
    }

    /// `n` points with `x ~ U[0, 2pi)`.
    pub fn sample_points(&self, n: usize, rng: &mut RandomStream) -> (Vec<f64>, Vec<f64>) {
        let u = Uniform::new(0.0, TAU).expect("valid range");
        let xs: Vec<f64> = (0..n).map(|_| u.sample(rng)).collect();
        let ys = xs.iter().map(|&x| self.target(x)).collect();
        (xs, ys)
    }
}

/// Task distribution over (amplitude, phase, frequency); `phi = 0.5` everywhere is uniform.
pub fn sine_distribution(phi: [f64; 3]) -> Result<TaskDistribution> {
    let ranges = [AMPLITUDE_RANGE, PHASE_RANGE, FREQUENCY_RANGE];
    TaskDistribution::product(
        phi.iter().zip(ranges).map(|(&p, (lo, hi))| TaskDistribution::affine_beta(p, lo, hi)).collect::<Result<_>>()?,
    )
}

pub fn sample_sine_task(dist: &TaskDistribution, rng: &mut RandomStream) -> Result<SineTask> {
    if dist.dim() != 3 {
        return Err(Error::Shape(format!("sine distribution needs 3 components, got {}", dist.dim())));
    }
    SineTask::from_task(&dist.sample_one(rng))
}

/// Scalar-in, scalar-out tanh MLP stored as one flat parameter vector.
///
/// Layout per layer: weights row-major `(out, in)`, then biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl Regressor {
    pub fn new(hidden: &[usize], rng: &mut RandomStream) -> Self {
        let mut sizes = vec![1];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.random_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Regressor { sizes, params }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.n_params(), params.len())));
        }
        Ok(Regressor { sizes: self.sizes.clone(), params })
    }

    pub fn predict(&self, x: f64) -> f64 {
        predict_with(&self.sizes, &self.params, x)
    }

    pub fn loss(&self, xs: &[f64], ys: &[f64]) -> f64 {
        mse_with(&self.sizes, &self.params, xs, ys)
    }

    /// Mean squared error and its gradient.
    pub fn loss_grad(&self, xs: &[f64], ys: &[f64]) -> (f64, Vec<f64>) {
        mse_grad_with(&self.sizes, &self.params, xs, ys)
    }

    /// `steps` plain gradient steps on `(xs, ys)`.
    pub fn adapt(&self, xs: &[f64], ys: &[f64], lr: f64, steps: usize) -> Regressor {
        let mut theta = self.params.clone();
        for _ in 0..steps {
            let (_, g) = mse_grad_with(&self.sizes, &theta, xs, ys);
            theta.iter_mut().zip(&g).for_each(|(t, g)| *t -= lr * g);
        }
        Regressor { sizes: self.sizes.clone(), params: theta }
    }
}

/// Offsets of each layer's block in the flat parameter vector.
fn layer_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut off = 0;
    for w in sizes.windows(2) {
        offsets.push(off);
        off += w[1] * (w[0] + 1);
    }
    offsets.push(off);
    offsets
}

/// Forward pass writing every layer's activations into `acts` (laid out by `act_off`).
fn forward_into(sizes: &[usize], offsets: &[usize], act_off: &[usize], theta: &[f64], x: f64, acts: &mut [f64]) -> f64 {
    let n_layers = sizes.len() - 1;
    acts[0] = x;
    for l in 0..n_layers {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let wt = &theta[offsets[l]..offsets[l] + n_out * n_in];
        let b = &theta[offsets[l] + n_out * n_in..offsets[l + 1]];
        let (prev, next) = acts.split_at_mut(act_off[l + 1]);
        let input = &prev[act_off[l]..];
        for o in 0..n_out {
            let z = b[o] + wt[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(w, v)| w * v).sum::<f64>();
            next[o] = if l + 1 == n_layers { z } else { z.tanh() };
        }
    }
    acts[act_off[n_layers]]
}

fn activation_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut v = vec![0];
    for s in sizes {
        v.push(v.last().unwrap() + s);
    }
    v
}

fn predict_with(sizes: &[usize], theta: &[f64], x: f64) -> f64 {
    let act_off = activation_offsets(sizes);
    let mut acts = vec![0.0; act_off[sizes.len()]];
    forward_into(sizes, &layer_offsets(sizes), &act_off, theta, x, &mut acts)
}

fn mse_with(sizes: &[usize], theta: &[f64], xs: &[f64], ys: &[f64]) -> f64 {
    let offsets = layer_offsets(sizes);
    let act_off = activation_offsets(sizes);
    let mut acts = vec![0.0; act_off[sizes.len()]];
    xs.iter().zip(ys).map(|(&x, &y)| (forward_into(sizes, &offsets, &act_off, theta, x, &mut acts) - y).powi(2)).sum::<f64>()
        / xs.len() as f64
}

fn mse_grad_with(sizes: &[usize], theta: &[f64], xs: &[f64], ys: &[f64]) -> (f64, Vec<f64>) {
    let n_layers = sizes.len() - 1;
    let offsets = layer_offsets(sizes);
    let act_off = activation_offsets(sizes);
    let widest = *sizes.iter().max().unwrap();
    let mut acts = vec![0.0; act_off[sizes.len()]];
    let mut delta = vec![0.0; widest];
    let mut back = vec![0.0; widest];
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    let scale = 2.0 / xs.len() as f64;
    for (&x, &y) in xs.iter().zip(ys) {
        let err = forward_into(sizes, &offsets, &act_off, theta, x, &mut acts) - y;
        loss += err * err;
        delta[0] = scale * err;
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let base = offsets[l];
            let input = &acts[act_off[l]..act_off[l + 1]];
            for o in 0..n_out {
                let d = delta[o];
                let row = &mut grad[base + o * n_in..base + (o + 1) * n_in];
                row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                grad[base + n_out * n_in + o] += d;
            }
            if l > 0 {
                back[..n_in].fill(0.0);
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &theta[base + o * n_in..base + (o + 1) * n_in];
                    back[..n_in].iter_mut().zip(row).for_each(|(b, w)| *b += w * d);
                }
                for i in 0..n_in {
                    delta[i] = back[i] * (1.0 - input[i] * input[i]);
                }
            }
        }
    }
    (loss / xs.len() as f64, grad)
}

/// First-order MAML gradient: one inner step on the support set, query gradient at the adapted point.
/// Returns `(post-adaptation query loss, gradient)`.
pub fn fomaml_gradient(
    model: &Regressor,
    support: (&[f64], &[f64]),
    query: (&[f64], &[f64]),
    inner_lr: f64,
) -> (f64, Vec<f64>) {
    let adapted = model.adapt(support.0, support.1, inner_lr, 1);
    adapted.loss_grad(query.0, query.1)
}

/// Full MAML gradient `(I - lr H_s) g_q`, with the support Hessian-vector
/// product taken by central differences of the support gradient.
pub fn maml_gradient(
    model: &Regressor,
    support: (&[f64], &[f64]),
    query: (&[f64], &[f64]),
    inner_lr: f64,
) -> (f64, Vec<f64>) {
    let (loss, gq) = fomaml_gradient(model, support, query, inner_lr);
    let norm = gq.iter().map(|v| v * v).sum::<f64>().sqrt();
    if inner_lr == 0.0 || norm == 0.0 {
        return (loss, gq);
    }
    let eps = HVP_STEP / norm;
    let shifted = |sign: f64| {
        let theta: Vec<f64> = model.params.iter().zip(&gq).map(|(t, v)| t + sign * eps * v).collect();
        mse_grad_with(&model.sizes, &theta, support.0, support.1).1
    };
    let (plus, minus) = (shifted(1.0), shifted(-1.0));
    let grad = gq
        .iter()
        .zip(plus.iter().zip(&minus))
        .map(|(g, (p, m))| g - inner_lr * (p - m) / (2.0 * eps))
        .collect();
    (loss, grad)
}

/// Parameter-space step length of the finite-difference Hessian-vector product.
pub const HVP_STEP: f64 = 1e-4;

/// One meta-update with a plain SGD outer step.
pub fn meta_train_step(
    model: &Regressor,
    support: (&[f64], &[f64]),
    query: (&[f64], &[f64]),
    inner_lr: f64,
    outer_lr: f64,
) -> (Regressor, f64) {
    let (loss, g) = fomaml_gradient(model, support, query, inner_lr);
    let theta = model.params.iter().zip(&g).map(|(t, g)| t - outer_lr * g).collect();
    (Regressor { sizes: model.sizes.clone(), params: theta }, loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SineConfig {
    pub hidden: Vec<usize>,
    /// Keep the inner-step Jacobian in the meta-gradient.
    pub second_order: bool,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub optimizer: OptimizerKind,
    pub n_support: usize,
    pub n_query: usize,
    /// Test-time adaptation steps at which loss is reported.
    pub test_steps: Vec<usize>,
}

impl Default for SineConfig {
    fn default() -> Self {
        SineConfig {
            hidden: vec![40, 40],
            second_order: false,
            inner_lr: 0.01,
            outer_lr: 0.001,
            optimizer: OptimizerKind::Adam,
            n_support: 10,
            n_query: 10,
            test_steps: vec![1, 5, 10],
        }
    }
}

impl SineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.n_support == 0 || self.n_query == 0 {
            return Err(Error::InvalidConfig("hidden sizes and set sizes must be positive".into()));
        }
        if !(self.inner_lr >= 0.0 && self.outer_lr > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be non-negative (outer positive)".into()));
        }
        if self.test_steps.is_empty() || self.test_steps.contains(&0) {
            return Err(Error::InvalidConfig("test_steps must be non-empty and positive".into()));
        }
        Ok(())
    }
}

/// One task's support/query data with its post-adaptation loss and meta-gradient.
pub struct SineSample {
    pub task: SineTask,
    pub query_loss: f64,
    pub grad: Vec<f64>,
}

pub struct SineProblem {
    pub config: SineConfig,
    pub model: Regressor,
    adam: Adam,
    pub steps: usize,
}

impl SineProblem {
    pub fn new(config: SineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let model = Regressor::new(&config.hidden, &mut stream(seed, &[TAG_INIT]));
        let adam = Adam::new(model.n_params());
        Ok(SineProblem { config, model, adam, steps: 0 })
    }

    /// Query loss after each of `config.test_steps` adaptation steps.
    pub fn test_losses(&self, task: &SineTask, rng: &mut RandomStream) -> Vec<f64> {
        let (sx, sy) = task.sample_points(self.config.n_support, rng);
        let (qx, qy) = task.sample_points(self.config.n_query, rng);
        let mut model = self.model.clone();
        let mut done = 0;
        self.config
            .test_steps
            .iter()
            .map(|&k| {
                model = model.adapt(&sx, &sy, self.config.inner_lr, k.saturating_sub(done));
                done = done.max(k);
                model.loss(&qx, &qy)
            })
            .collect()
    }
}

impl TrainingProblem for SineProblem {
    type Sample = SineSample;

    fn collect(&self, task: &Task, rng: &mut RandomStream) -> SineSample {
        let task = SineTask::from_task(task).expect("sine tasks are 3-dimensional");
        let (sx, sy) = task.sample_points(self.config.n_support, rng);
        let (qx, qy) = task.sample_points(self.config.n_query, rng);
        let meta_gradient = if self.config.second_order { maml_gradient } else { fomaml_gradient };
        let (query_loss, grad) = meta_gradient(&self.model, (&sx, &sy), (&qx, &qy), self.config.inner_lr);
        SineSample { task, query_loss, grad }
    }

    fn score(&self, sample: &SineSample) -> f64 {
        -sample.query_loss
    }

    fn frames(&self, _sample: &SineSample) -> usize {
        self.config.n_support + self.config.n_query
    }

    fn learn(&mut self, samples: &[SineSample]) -> Result<()> {
        if samples.is_empty() {
            return Ok(());
        }
        let n = self.model.n_params();
        let mut g = vec![0.0; n];
        for s in samples {
            g.iter_mut().zip(&s.grad).for_each(|(a, b)| *a += b / samples.len() as f64);
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(domain("non-finite meta-gradient"));
        }
        match self.config.optimizer {
            OptimizerKind::Sgd => self.model.params.iter_mut().zip(&g).for_each(|(t, g)| *t -= self.config.outer_lr * g),
            OptimizerKind::Adam => self.adam.step(&mut self.model.params, &g, self.config.outer_lr),
        }
        self.steps += 1;
        Ok(())
    }

    fn extra_names(&self) -> Vec<String> {
        self.config
            .test_steps
            .iter()
            .flat_map(|k| [format!("loss_mean_{k}"), format!("loss_cvar_{k}")])
            .collect()
    }

    /// Score is the negated loss after the first listed step count; extras are all step counts.
    fn evaluate_task(&self, task: &Task, rng: &mut RandomStream) -> (f64, Vec<f64>) {
        let task = SineTask::from_task(task).expect("sine tasks are 3-dimensional");
        let losses = self.test_losses(&task, rng);
        (-losses[0], losses)
    }

    fn summarize_extras(&self, per_task: &[Vec<f64>], alpha: f64) -> Vec<f64> {
        (0..self.config.test_steps.len())
            .flat_map(|j| {
                let losses: Vec<f64> = per_task.iter().map(|e| e[j]).collect();
                let neg: Vec<f64> = losses.iter().map(|l| -l).collect();
                let mean = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
                // worst alpha-fraction of losses, via the lower tail of the negated losses
                let tail = cvar(&neg, alpha).map(|c| -c).unwrap_or(f64::NAN);
                [mean, tail]
            })
            .collect()
    }

    fn checksum(&self) -> f64 {
        self.model.params.iter().sum()
    }
}

/// Meta-trains a sine regressor under `train`; tasks come from the uniform distribution.
pub fn run_supervised(sine: &SineConfig, train_config: &TrainConfig) -> Result<(TrainTrace, SineProblem)> {
    if train_config.algorithm == Algorithm::NaiveSampler {
        return Err(Error::InvalidConfig("the sine track supports baseline, cvar_ml and roml".into()));
    }
    let mut problem = SineProblem::new(sine.clone(), train_config.seed)?;
    let dist = sine_distribution([0.5; 3])?;
    let trace = train(&mut problem, &dist, train_config)?;
    Ok((trace, problem))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::fd_gradient;

    fn model(seed: u64) -> Regressor {
        Regressor::new(&[40, 40], &mut stream(seed, &[1]))
    }

    #[test]
    fn task_sampling_ranges_and_mean() {
        let d = sine_distribution([0.5; 3]).unwrap();
        let mut rng = stream(0, &[]);
        for _ in 0..1000 {
            assert!(sample_sine_task(&d, &mut rng).unwrap().in_range());
        }
        let d = sine_distribution([0.9, 0.5, 0.5]).unwrap();
        let n = 20000;
        let mean = (0..n).map(|_| sample_sine_task(&d, &mut rng).unwrap().amplitude).sum::<f64>() / n as f64;
        assert!((mean - (0.1 + 0.9 * 4.9)).abs() < 0.03, "{mean}");
        let a = sample_sine_task(&d, &mut stream(5, &[])).unwrap();
        assert_eq!(a, sample_sine_task(&d, &mut stream(5, &[])).unwrap());
    }

    #[test]
    fn generated_points_are_exact() {
        let t = SineTask { amplitude: 2.3, phase: 1.1, frequency: 0.7 };
        let (xs, ys) = t.sample_points(100, &mut stream(1, &[]));
        for (x, y) in xs.iter().zip(&ys) {
            assert!((0.0..TAU).contains(x));
            assert!((y - 2.3 * (0.7 * x + 1.1).sin()).abs() <= 1e-12);
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let m = model(3);
        let (xs, ys) = SineTask { amplitude: 3.0, phase: 0.5, frequency: 1.5 }.sample_points(10, &mut stream(2, &[]));
        let (_, g) = m.loss_grad(&xs, &ys);
        let fd = fd_gradient(|th| mse_with(&m.sizes, th, &xs, &ys), &m.params, 1e-5);
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-6, "{}", err / norm);
    }

    #[test]
    fn fomaml_gradient_matches_shifted_objective() {
        let m = model(4);
        let t = SineTask { amplitude: 4.0, phase: 2.0, frequency: 2.0 };
        let mut rng = stream(3, &[]);
        let (sx, sy) = t.sample_points(10, &mut rng);
        let (qx, qy) = t.sample_points(10, &mut rng);
        let lr = 0.01;
        let (_, g) = fomaml_gradient(&m, (&sx, &sy), (&qx, &qy), lr);
        // first-order objective: the inner displacement is held fixed at the base point
        let shift: Vec<f64> = m.adapt(&sx, &sy, lr, 1).params.iter().zip(&m.params).map(|(a, b)| a - b).collect();
        let f = |th: &[f64]| {
            let moved: Vec<f64> = th.iter().zip(&shift).map(|(a, s)| a + s).collect();
            mse_with(&m.sizes, &moved, &qx, &qy)
        };
        let fd = fd_gradient(f, &m.params, 1e-5);
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-4, "{}", err / norm);
    }

    #[test]
    fn maml_gradient_matches_finite_differences() {
        let m = model(7);
        let t = SineTask { amplitude: 3.5, phase: 1.0, frequency: 1.2 };
        let mut rng = stream(8, &[]);
        let (sx, sy) = t.sample_points(10, &mut rng);
        let (qx, qy) = t.sample_points(10, &mut rng);
        let lr = 0.01;
        let (_, g) = maml_gradient(&m, (&sx, &sy), (&qx, &qy), lr);
        let f = |th: &[f64]| {
            let base = m.with_params(th.to_vec()).unwrap();
            base.adapt(&sx, &sy, lr, 1).loss(&qx, &qy)
        };
        let fd = fd_gradient(f, &m.params, 1e-5);
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-5, "{}", err / norm);
        let (_, fo) = fomaml_gradient(&m, (&sx, &sy), (&qx, &qy), lr);
        let gap = fo.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(gap / norm > 10.0 * err / norm);
    }

    #[test]
    fn zero_inner_lr_and_zero_amplitude() {
        let m = model(5);
        let t = SineTask { amplitude: 0.0, phase: 0.0, frequency: 1.0 };
        let (xs, ys) = t.sample_points(10, &mut stream(4, &[]));
        assert!(ys.iter().all(|&y| y == 0.0));
        let (_, loss) = meta_train_step(&m, (&xs, &ys), (&xs, &ys), 0.0, 0.1);
        let sq = xs.iter().map(|&x| m.predict(x).powi(2)).sum::<f64>() / 10.0;
        assert!((loss - sq).abs() < 1e-12);
        assert!((loss - m.loss(&xs, &ys)).abs() < 1e-15);
    }

    #[test]
    fn small_inner_step_decreases_support_loss() {
        let d = sine_distribution([0.5; 3]).unwrap();
        let mut rng = stream(6, &[]);
        let m = model(6);
        let mut failures = 0;
        for _ in 0..100 {
            let t = sample_sine_task(&d, &mut rng).unwrap();
            let (xs, ys) = t.sample_points(10, &mut rng);
            if m.adapt(&xs, &ys, 1e-3, 1).loss(&xs, &ys) >= m.loss(&xs, &ys) {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures}");
    }

    #[test]
    fn score_is_negated_loss() {
        let p = SineProblem::new(SineConfig::default(), 0).unwrap();
        let t = SineTask { amplitude: 1.0, phase: 0.0, frequency: 1.0 };
        let mut s = p.collect(&t.to_task(), &mut stream(0, &[]));
        let before = p.score(&s);
        assert_eq!(before, -s.query_loss);
        s.query_loss += 1.0;
        assert!(p.score(&s) < before);
    }

    #[test]
    fn meta_training_reduces_loss_and_cvar_reduction_holds() {
        let cfg = TrainConfig {
            n_tasks: 10,
            iterations: 300,
            eval_every: 100,
            eval_tasks: 200,
            final_eval_tasks: 200,
            ..Default::default()
        };
        let fast = SineConfig { outer_lr: 0.01, ..Default::default() };
        let (trace, _) = run_supervised(&fast, &cfg).unwrap();
        let curve = trace.eval_curve();
        assert!(curve.last().unwrap().1.mean > curve[0].1.mean);
        assert_eq!(trace.extra_names.len(), 6);

        let short = TrainConfig { iterations: 20, eval_every: 10, eval_tasks: 50, final_eval_tasks: 50, ..cfg };
        let base = run_supervised(&SineConfig::default(), &TrainConfig { alpha: 1.0, ..short.clone() }).unwrap().0;
        let cv = run_supervised(&SineConfig::default(), &TrainConfig { alpha: 1.0, ..short.with_algorithm(Algorithm::CvarMl) })
            .unwrap()
            .0;
        assert_eq!(base.records, cv.records);
        assert!(run_supervised(&SineConfig::default(), &short.with_algorithm(Algorithm::NaiveSampler)).is_err());
    }

    #[test]
    fn test_losses_follow_steps() {
        let p = SineProblem::new(SineConfig { test_steps: vec![1, 10], ..Default::default() }, 1).unwrap();
        let t = SineTask { amplitude: 2.0, phase: 1.0, frequency: 1.0 };
        let l = p.test_losses(&t, &mut stream(9, &[]));
        let mut rng = stream(9, &[]);
        let (sx, sy) = t.sample_points(10, &mut rng);
        let (qx, qy) = t.sample_points(10, &mut rng);
        assert!((l[1] - p.model.adapt(&sx, &sy, 0.01, 10).loss(&qx, &qy)).abs() < 1e-12);
        assert!((l[0] - p.model.adapt(&sx, &sy, 0.01, 1).loss(&qx, &qy)).abs() < 1e-12);
    }
}
