//! History-conditioned softmax policies and policy-gradient learners.
//!
//! The gradient estimators in this module all funnel through one accumulation
//! routine, so that restricting the CVaR estimator to `alpha = 1` reproduces
//! the mean estimator bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metamdp::{Actor, Context, MetaMdp, MetaRollout};
use crate::optim::{Adam, OptimizerKind};
use crate::risk::quantile;
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturizerMode {
    /// Index by `(state, episode, step)`.
    FullTabular,
    /// Observation features, episode one-hot, running slip mean, elapsed fraction, bias.
    Features,
}

/// Maps a [`Context`] to a table index or a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryFeaturizer {
    pub mode: FeaturizerMode,
    pub n_states: usize,
    pub horizon: usize,
    pub episodes: usize,
    pub obs_dim: usize,
}

impl HistoryFeaturizer {
    pub fn for_env(env: &dyn MetaMdp, mode: FeaturizerMode) -> Self {
        HistoryFeaturizer {
            mode,
            n_states: env.n_states(),
            horizon: env.horizon(),
            episodes: env.episodes(),
            obs_dim: env.observe(0).len(),
        }
    }

    pub fn n_contexts(&self) -> usize {
        self.n_states * self.horizon * self.episodes
    }

    pub fn index(&self, ctx: &Context) -> usize {
        (ctx.episode * self.horizon + ctx.step) * self.n_states + ctx.state
    }

    pub fn feature_dim(&self) -> usize {
        self.obs_dim + self.episodes + 3
    }

    pub fn features_into(&self, env: &dyn MetaMdp, ctx: &Context, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(env.observe(ctx.state));
        out.extend((0..self.episodes).map(|k| if k == ctx.episode { 1.0 } else { 0.0 }));
        out.push(ctx.slip_mean());
        out.push(ctx.step as f64 / self.horizon as f64);
        out.push(1.0);
    }

    pub fn features(&self, env: &dyn MetaMdp, ctx: &Context) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.feature_dim());
        self.features_into(env, ctx, &mut v);
        v
    }
}

/// Fully connected layer, `w` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { inputs, outputs, w: vec![0.0; inputs * outputs], b: vec![0.0; outputs] }
    }

    fn glorot(inputs: usize, outputs: usize, rng: &mut RandomStream) -> Self {
        let s = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut l = Layer::zeros(inputs, outputs);
        l.w.iter_mut().for_each(|w| *w = rng.random_range(-s..s));
        l
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>());
        }
    }

    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Representation {
    /// Logits indexed by `context index x action`.
    TabularSoftmax { logits: Vec<f64> },
    /// Tanh hidden layers followed by a linear softmax head.
    DenseNet { layers: Vec<Layer> },
}

/// Stochastic meta-policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub n_actions: usize,
    pub featurizer: HistoryFeaturizer,
    pub representation: Representation,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

impl Policy {
    /// Uniform tabular policy over `(state, episode, step)` contexts.
    pub fn tabular(env: &dyn MetaMdp) -> Self {
        let featurizer = HistoryFeaturizer::for_env(env, FeaturizerMode::FullTabular);
        let logits = vec![0.0; featurizer.n_contexts() * env.n_actions()];
        Policy { n_actions: env.n_actions(), featurizer, representation: Representation::TabularSoftmax { logits } }
    }

    /// Dense policy on history features. Hidden layers get Glorot weights; the
    /// head starts at zero so the initial policy is uniform. `hidden = []` is a
    /// linear softmax policy.
    pub fn dense(env: &dyn MetaMdp, hidden: &[usize], rng: &mut RandomStream) -> Self {
        let featurizer = HistoryFeaturizer::for_env(env, FeaturizerMode::Features);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut inputs = featurizer.feature_dim();
        for &h in hidden {
            layers.push(Layer::glorot(inputs, h, rng));
            inputs = h;
        }
        layers.push(Layer::zeros(inputs, env.n_actions()));
        Policy { n_actions: env.n_actions(), featurizer, representation: Representation::DenseNet { layers } }
    }

    pub fn n_params(&self) -> usize {
        match &self.representation {
            Representation::TabularSoftmax { logits } => logits.len(),
            Representation::DenseNet { layers } => layers.iter().map(Layer::n_params).sum(),
        }
    }

    /// Flat parameter vector; dense layers contribute `w` then `b`, in layer order.
    pub fn params(&self) -> Vec<f64> {
        match &self.representation {
            Representation::TabularSoftmax { logits } => logits.clone(),
            Representation::DenseNet { layers } => {
                layers.iter().flat_map(|l| l.w.iter().chain(&l.b)).copied().collect()
            }
        }
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.n_params(), theta.len())));
        }
        match &mut self.representation {
            Representation::TabularSoftmax { logits } => logits.copy_from_slice(theta),
            Representation::DenseNet { layers } => {
                let mut off = 0;
                for l in layers {
                    let (nw, nb) = (l.w.len(), l.b.len());
                    l.w.copy_from_slice(&theta[off..off + nw]);
                    l.b.copy_from_slice(&theta[off + nw..off + nw + nb]);
                    off += nw + nb;
                }
            }
        }
        Ok(())
    }

    pub fn with_params(&self, theta: &[f64]) -> Result<Self> {
        let mut p = self.clone();
        p.set_params(theta)?;
        Ok(p)
    }

    /// `theta += lr * grad`.
    pub fn ascend(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        let mut theta = self.params();
        if grad.len() != theta.len() {
            return Err(Error::Shape(format!("gradient has {} entries, policy {}", grad.len(), theta.len())));
        }
        theta.iter_mut().zip(grad).for_each(|(t, g)| *t += lr * g);
        self.set_params(&theta)
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, layers: &[Layer], x: Vec<f64>) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(layers.len() + 1);
        acts.push(x);
        for (i, l) in layers.iter().enumerate() {
            let mut out = Vec::with_capacity(l.outputs);
            l.forward(acts.last().expect("input"), &mut out);
            if i + 1 < layers.len() {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, env: &dyn MetaMdp, ctx: &Context) -> Vec<f64> {
        match &self.representation {
            Representation::TabularSoftmax { logits } => {
                let i = self.featurizer.index(ctx) * self.n_actions;
                logits[i..i + self.n_actions].to_vec()
            }
            Representation::DenseNet { layers } => {
                let x = self.featurizer.features(env, ctx);
                self.forward(layers, x).pop().expect("logits")
            }
        }
    }

    /// Adds `scale * grad_theta log pi(action | ctx)` to `grad`.
    pub fn accumulate_grad_log_pi(&self, env: &dyn MetaMdp, ctx: &Context, action: usize, scale: f64, grad: &mut [f64]) {
        self.accumulate_through_logits(env, ctx, grad, |p, out| {
            for (a, (o, pa)) in out.iter_mut().zip(p).enumerate() {
                *o = scale * (if a == action { 1.0 } else { 0.0 } - pa);
            }
        });
    }

    /// Adds `scale * grad_theta H(pi(. | ctx))` to `grad`.
    pub fn accumulate_grad_entropy(&self, env: &dyn MetaMdp, ctx: &Context, scale: f64, grad: &mut [f64]) {
        self.accumulate_through_logits(env, ctx, grad, |p, out| {
            let h: f64 = -p.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>();
            for (o, &pa) in out.iter_mut().zip(p) {
                *o = if pa > 0.0 { -scale * pa * (pa.ln() + h) } else { 0.0 };
            }
        });
    }

    /// Backpropagates a logits gradient, produced by `dlogits(probs, out)`, into `grad`.
    fn accumulate_through_logits(
        &self,
        env: &dyn MetaMdp,
        ctx: &Context,
        grad: &mut [f64],
        dlogits: impl FnOnce(&[f64], &mut [f64]),
    ) {
        match &self.representation {
            Representation::TabularSoftmax { logits } => {
                let i = self.featurizer.index(ctx) * self.n_actions;
                let p = softmax(&logits[i..i + self.n_actions]);
                let mut d = vec![0.0; self.n_actions];
                dlogits(&p, &mut d);
                grad[i..i + self.n_actions].iter_mut().zip(&d).for_each(|(g, d)| *g += d);
            }
            Representation::DenseNet { layers } => {
                let acts = self.forward(layers, self.featurizer.features(env, ctx));
                let p = softmax(acts.last().expect("logits"));
                let mut delta = vec![0.0; self.n_actions];
                dlogits(&p, &mut delta);
                // parameter offsets of each layer
                let mut offsets = Vec::with_capacity(layers.len());
                let mut off = 0;
                for l in layers {
                    offsets.push(off);
                    off += l.n_params();
                }
                for li in (0..layers.len()).rev() {
                    let l = &layers[li];
                    let input = &acts[li];
                    let base = offsets[li];
                    for o in 0..l.outputs {
                        let d = delta[o];
                        if d == 0.0 {
                            continue;
                        }
                        let row = &mut grad[base + o * l.inputs..base + (o + 1) * l.inputs];
                        row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                        grad[base + l.w.len() + o] += d;
                    }
                    if li > 0 {
                        let mut prev = vec![0.0; l.inputs];
                        for o in 0..l.outputs {
                            let d = delta[o];
                            if d == 0.0 {
                                continue;
                            }
                            let row = &l.w[o * l.inputs..(o + 1) * l.inputs];
                            prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
                        }
                        // input of layer li is tanh output of layer li - 1
                        prev.iter_mut().zip(input).for_each(|(p, h)| *p *= 1.0 - h * h);
                        delta = prev;
                    }
                }
            }
        }
    }

    pub fn grad_log_pi(&self, env: &dyn MetaMdp, ctx: &Context, action: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.n_params()];
        self.accumulate_grad_log_pi(env, ctx, action, 1.0, &mut g);
        g
    }

    /// Random parameters, uniform in `[-scale, scale]`. Used by gradient checks.
    pub fn randomize(&mut self, rng: &mut RandomStream, scale: f64) {
        let theta: Vec<f64> = (0..self.n_params()).map(|_| rng.random_range(-scale..scale)).collect();
        self.set_params(&theta).expect("length matches");
    }
}

impl Actor for Policy {
    fn action_probs(&self, env: &dyn MetaMdp, ctx: &Context) -> Vec<f64> {
        softmax(&self.logits(env, ctx))
    }
}

/// Gradient vector plus what went into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    pub n_tasks: usize,
    pub n_rollouts: usize,
    pub baseline: f64,
}

/// `sum_i (R_i - b) * coef * sum_t grad log pi` over `rollouts`, in order.
fn score_sum<'a>(
    policy: &Policy,
    env: &dyn MetaMdp,
    rollouts: impl Iterator<Item = &'a MetaRollout>,
    baseline: f64,
    coef: f64,
) -> (Vec<f64>, usize) {
    let mut grad = vec![0.0; policy.n_params()];
    let mut n = 0;
    for r in rollouts {
        let weight = (r.ret - baseline) * coef;
        n += 1;
        if weight == 0.0 {
            continue;
        }
        for tr in r.transitions() {
            policy.accumulate_grad_log_pi(env, &tr.ctx, tr.action, weight, &mut grad);
        }
    }
    (grad, n)
}

/// Mean meta policy gradient `(1/n) sum_i (R_i - b) sum_t grad log pi`.
pub fn mean_pg_gradient(policy: &Policy, env: &dyn MetaMdp, rollouts: &[MetaRollout], baseline: f64) -> Result<GradientEstimate> {
    if rollouts.is_empty() {
        return Err(Error::EmptySelection);
    }
    let (grad, n) = score_sum(policy, env, rollouts.iter(), baseline, 1.0 / rollouts.len() as f64);
    Ok(GradientEstimate { grad, n_tasks: n, n_rollouts: n, baseline })
}

/// One plain ascent step along [`mean_pg_gradient`].
pub fn mean_pg_step(policy: &Policy, env: &dyn MetaMdp, rollouts: &[MetaRollout], baseline: f64, lr: f64) -> Result<Policy> {
    let g = mean_pg_gradient(policy, env, rollouts, baseline)?;
    let mut next = policy.clone();
    next.ascend(&g.grad, lr)?;
    Ok(next)
}

/// Per-task mean returns of an `N x M` batch.
pub fn task_returns(task_batches: &[Vec<MetaRollout>]) -> Vec<f64> {
    task_batches.iter().map(|rs| rs.iter().map(|r| r.ret).sum::<f64>() / rs.len() as f64).collect()
}

/// Indices of the tasks whose mean return is at or below the `alpha` sample quantile.
pub fn cvar_selection(task_batches: &[Vec<MetaRollout>], alpha: f64) -> Result<Vec<usize>> {
    let returns = task_returns(task_batches);
    let q = quantile(&returns, alpha)?;
    Ok((0..returns.len()).filter(|&i| returns[i] <= q).collect())
}

/// CVaR meta policy gradient over `N` tasks with `M` rollouts each.
///
/// Tasks with mean return at or below the `alpha` sample quantile contribute
/// all their rollouts, each weighted `(R_im - b) / (alpha N M)`.
pub fn cvar_ml_gradient(
    policy: &Policy,
    env: &dyn MetaMdp,
    task_batches: &[Vec<MetaRollout>],
    alpha: f64,
    baseline: f64,
) -> Result<GradientEstimate> {
    if task_batches.is_empty() || task_batches.iter().any(Vec::is_empty) {
        return Err(Error::EmptySelection);
    }
    let m = task_batches[0].len();
    if task_batches.iter().any(|b| b.len() != m) {
        return Err(Error::Shape("every task needs the same number of rollouts".into()));
    }
    let selected = cvar_selection(task_batches, alpha)?;
    let coef = 1.0 / (alpha * (task_batches.len() * m) as f64);
    let (grad, n_rollouts) =
        score_sum(policy, env, selected.iter().flat_map(|&i| task_batches[i].iter()), baseline, coef);
    Ok(GradientEstimate { grad, n_tasks: selected.len(), n_rollouts, baseline })
}

/// Ordinary RL CVaR policy gradient with an explicit tail threshold:
/// `(1/(alpha N)) sum_i 1{R_i <= threshold} (R_i - b) sum_t grad log pi`.
pub fn rl_cvar_pg_gradient_at(
    policy: &Policy,
    env: &dyn MetaMdp,
    rollouts: &[MetaRollout],
    alpha: f64,
    threshold: f64,
    baseline: f64,
) -> Result<GradientEstimate> {
    if rollouts.is_empty() {
        return Err(Error::EmptySelection);
    }
    let coef = 1.0 / (alpha * rollouts.len() as f64);
    let (grad, n) = score_sum(policy, env, rollouts.iter().filter(|r| r.ret <= threshold), baseline, coef);
    Ok(GradientEstimate { grad, n_tasks: n, n_rollouts: n, baseline })
}

/// [`rl_cvar_pg_gradient_at`] with the sample quantile as threshold and, when
/// `baseline` is `None`, as baseline.
pub fn rl_cvar_pg_gradient(
    policy: &Policy,
    env: &dyn MetaMdp,
    rollouts: &[MetaRollout],
    alpha: f64,
    baseline: Option<f64>,
) -> Result<GradientEstimate> {
    let returns: Vec<f64> = rollouts.iter().map(|r| r.ret).collect();
    let q = quantile(&returns, alpha)?;
    rl_cvar_pg_gradient_at(policy, env, rollouts, alpha, q, baseline.unwrap_or(q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineRule {
    Constant { value: f64 },
    BatchMeanReturn,
    /// Running average of the target per `(state, episode, step)` context.
    ValueTable { lr: f64 },
    /// Sample `alpha`-quantile of the batch returns.
    Quantile { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgConfig {
    pub lr: f64,
    pub baseline: BaselineRule,
    /// Weight each score term by the return still to come instead of the whole return.
    pub reward_to_go: bool,
    /// Rescale the gradient to this norm when it is larger.
    pub max_grad_norm: Option<f64>,
    /// Weight of the mean per-step policy entropy added to the objective.
    pub entropy_coef: f64,
    pub optimizer: OptimizerKind,
}

impl Default for PgConfig {
    fn default() -> Self {
        PgConfig {
            lr: 0.05,
            baseline: BaselineRule::BatchMeanReturn,
            reward_to_go: false,
            max_grad_norm: None,
            entropy_coef: 0.0,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

/// The black-box meta-learner seen by the meta-algorithms.
pub trait MetaLearner: Send {
    fn policy(&self) -> &Policy;
    fn ml_step(&mut self, env: &dyn MetaMdp, rollouts: &[MetaRollout]) -> Result<()>;
}

/// REINFORCE-style meta-learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgLearner {
    pub policy: Policy,
    pub config: PgConfig,
    pub value: Vec<f64>,
    pub steps: usize,
    pub adam: Option<Adam>,
}

impl PgLearner {
    pub fn new(policy: Policy, config: PgConfig) -> Result<Self> {
        if !(config.lr.is_finite() && config.lr >= 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate must be finite and >= 0, got {}", config.lr)));
        }
        let value = match config.baseline {
            BaselineRule::ValueTable { lr } => {
                if !(lr > 0.0 && lr <= 1.0) {
                    return Err(Error::InvalidConfig(format!("value table rate must lie in (0, 1], got {lr}")));
                }
                vec![0.0; policy.featurizer.n_contexts()]
            }
            _ => Vec::new(),
        };
        if !(config.entropy_coef.is_finite() && config.entropy_coef >= 0.0) {
            return Err(Error::InvalidConfig(format!("entropy_coef must be finite and >= 0, got {}", config.entropy_coef)));
        }
        let adam = (config.optimizer == OptimizerKind::Adam).then(|| Adam::new(policy.n_params()));
        Ok(PgLearner { policy, config, value, steps: 0, adam })
    }

    fn scalar_baseline(&self, rollouts: &[MetaRollout]) -> Result<Option<f64>> {
        Ok(match self.config.baseline {
            BaselineRule::Constant { value } => Some(value),
            BaselineRule::BatchMeanReturn => Some(rollouts.iter().map(|r| r.ret).sum::<f64>() / rollouts.len() as f64),
            BaselineRule::Quantile { alpha } => {
                let returns: Vec<f64> = rollouts.iter().map(|r| r.ret).collect();
                Some(quantile(&returns, alpha)?)
            }
            BaselineRule::ValueTable { .. } => None,
        })
    }

    /// Per-transition targets: the whole return, or the weighted return still to come.
    fn targets(&self, r: &MetaRollout, gamma: f64) -> Vec<f64> {
        let k = r.episodes.len() as f64;
        if !self.config.reward_to_go {
            return vec![r.ret; r.frames()];
        }
        let contrib: Vec<f64> = r
            .episodes
            .iter()
            .flat_map(|ep| ep.iter().enumerate().map(move |(t, tr)| gamma.powi(t as i32) * tr.reward / k))
            .collect();
        let mut out = vec![0.0; contrib.len()];
        let mut acc = 0.0;
        for j in (0..contrib.len()).rev() {
            acc += contrib[j];
            out[j] = acc;
        }
        out
    }
}

impl MetaLearner for PgLearner {
    fn policy(&self) -> &Policy {
        &self.policy
    }

    fn ml_step(&mut self, env: &dyn MetaMdp, rollouts: &[MetaRollout]) -> Result<()> {
        if rollouts.is_empty() {
            return Err(Error::EmptySelection);
        }
        self.steps += 1;
        let scalar = self.scalar_baseline(rollouts)?;
        let plain = self.config.entropy_coef == 0.0 && self.adam.is_none();
        if let (Some(b), false, None, true) = (scalar, self.config.reward_to_go, self.config.max_grad_norm, plain) {
            self.policy = mean_pg_step(&self.policy, env, rollouts, b, self.config.lr)?;
            return Ok(());
        }
        // baselines are read before any parameter moves
        let coef = 1.0 / rollouts.len() as f64;
        let mut grad = vec![0.0; self.policy.n_params()];
        let mut value_targets = Vec::new();
        for r in rollouts {
            let targets = self.targets(r, env.gamma());
            for (tr, &g) in r.transitions().zip(&targets) {
                let b = match scalar {
                    Some(b) => b,
                    None => self.value[self.policy.featurizer.index(&tr.ctx)],
                };
                let w = (g - b) * coef;
                if w != 0.0 {
                    self.policy.accumulate_grad_log_pi(env, &tr.ctx, tr.action, w, &mut grad);
                }
                if self.config.entropy_coef > 0.0 {
                    let h = self.config.entropy_coef * coef / r.frames() as f64;
                    self.policy.accumulate_grad_entropy(env, &tr.ctx, h, &mut grad);
                }
                if scalar.is_none() {
                    value_targets.push((self.policy.featurizer.index(&tr.ctx), g));
                }
            }
        }
        if let Some(max) = self.config.max_grad_norm {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > max {
                grad.iter_mut().for_each(|g| *g *= max / norm);
            }
        }
        match &mut self.adam {
            Some(adam) => {
                let mut theta = self.policy.params();
                let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
                adam.step(&mut theta, &descent, self.config.lr);
                self.policy.set_params(&theta)?;
            }
            None => self.policy.ascend(&grad, self.config.lr)?,
        }
        if let BaselineRule::ValueTable { lr } = self.config.baseline {
            for (i, g) in value_targets {
                self.value[i] += lr * (g - self.value[i]);
            }
        }
        Ok(())
    }
}

/// Leaves the policy untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct NoopLearner {
    pub policy: Policy,
    pub calls: usize,
}

impl NoopLearner {
    pub fn new(policy: Policy) -> Self {
        NoopLearner { policy, calls: 0 }
    }
}

impl MetaLearner for NoopLearner {
    fn policy(&self) -> &Policy {
        &self.policy
    }
    fn ml_step(&mut self, _env: &dyn MetaMdp, _rollouts: &[MetaRollout]) -> Result<()> {
        self.calls += 1;
        Ok(())
    }
}

/// Wraps a learner and keeps a copy of every batch handed to it.
pub struct RecordingLearner<L> {
    pub inner: L,
    pub calls: Vec<Vec<MetaRollout>>,
}

impl<L: MetaLearner> RecordingLearner<L> {
    pub fn new(inner: L) -> Self {
        RecordingLearner { inner, calls: Vec::new() }
    }
}

impl<L: MetaLearner> MetaLearner for RecordingLearner<L> {
    fn policy(&self) -> &Policy {
        self.inner.policy()
    }
    fn ml_step(&mut self, env: &dyn MetaMdp, rollouts: &[MetaRollout]) -> Result<()> {
        self.calls.push(rollouts.to_vec());
        self.inner.ml_step(env, rollouts)
    }
}
