//! Meta-MDPs: task-conditioned environments rolled out for `K` episodes that
//! share one history.
//!
//! Three environments live here: the Khazad Dum gridworld, a three-state chain
//! small enough for exact enumeration, and a one-step bandit.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::RandomStream;
use crate::taskdist::{Task, TaskDistribution};

/// Upper bound on the number of paths [`enumerate_rollouts`] will visit.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

/// Result of a single environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: usize,
    pub reward: f64,
    /// Noise magnitude the agent felt on this step (0 when no noise applies).
    pub slip: f64,
    /// The step started in the environment's hazard zone (the bridge in Khazad Dum).
    pub flagged: bool,
}

/// A task-conditioned MDP with a fixed episode length and episodes-per-rollout.
pub trait MetaMdp: Send + Sync {
    fn name(&self) -> &str;
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Episode length `T`.
    fn horizon(&self) -> usize;
    /// Episodes per meta-rollout `K`.
    fn episodes(&self) -> usize;
    fn gamma(&self) -> f64;
    fn initial_state(&self, task: &Task, rng: &mut RandomStream) -> usize;
    fn step(&self, task: &Task, state: usize, action: usize, rng: &mut RandomStream) -> StepOutcome;
    /// Observation features of a state.
    fn observe(&self, state: usize) -> &[f64];
    fn check_task(&self, task: &Task) -> Result<()>;
}

/// A meta-MDP whose randomness can be listed exactly.
pub trait EnumerableMdp: MetaMdp {
    fn initial_distribution(&self, task: &Task) -> Vec<(f64, usize)>;
    fn transitions(&self, task: &Task, state: usize, action: usize) -> Vec<(f64, StepOutcome)>;
}

/// What the agent knows when acting: the current state plus a summary of the
/// history of the meta-rollout so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub state: usize,
    pub episode: usize,
    pub step: usize,
    pub slip_sum: f64,
    pub slip_count: usize,
}

impl Context {
    /// Running mean of the slip observed in the hazard zone, 0 before any.
    pub fn slip_mean(&self) -> f64 {
        if self.slip_count == 0 {
            0.0
        } else {
            self.slip_sum / self.slip_count as f64
        }
    }
}

/// Anything that can choose actions given a [`Context`].
pub trait Actor {
    fn action_probs(&self, env: &dyn MetaMdp, ctx: &Context) -> Vec<f64>;

    fn act(&self, env: &dyn MetaMdp, ctx: &Context, rng: &mut RandomStream) -> usize {
        sample_categorical(&self.action_probs(env, ctx), rng)
    }
}

pub fn sample_categorical(probs: &[f64], rng: &mut RandomStream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the last cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub ctx: Context,
    pub action: usize,
    pub reward: f64,
    pub flagged: bool,
}

/// `K` episodes of `T` transitions on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRollout {
    pub task: Task,
    pub episodes: Vec<Vec<Transition>>,
    pub ret: f64,
}

impl MetaRollout {
    /// `(1/K) sum_k sum_t gamma^t r_{k,t}` recomputed from the transitions.
    pub fn recompute_return(&self, gamma: f64) -> f64 {
        let k = self.episodes.len() as f64;
        self.episodes
            .iter()
            .map(|ep| ep.iter().enumerate().map(|(t, tr)| gamma.powi(t as i32) * tr.reward).sum::<f64>())
            .sum::<f64>()
            / k
    }

    pub fn frames(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    /// Per-episode returns.
    pub fn episode_returns(&self, gamma: f64) -> Vec<f64> {
        self.episodes
            .iter()
            .map(|ep| ep.iter().enumerate().map(|(t, tr)| gamma.powi(t as i32) * tr.reward).sum())
            .collect()
    }

    /// Number of episodes that spent at least one step in the hazard zone.
    pub fn flagged_episodes(&self) -> usize {
        self.episodes.iter().filter(|ep| ep.iter().any(|tr| tr.flagged)).count()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flatten()
    }
}

fn advance(ctx: &Context, out: &StepOutcome) -> (f64, usize) {
    if out.flagged {
        (ctx.slip_sum + out.slip, ctx.slip_count + 1)
    } else {
        (ctx.slip_sum, ctx.slip_count)
    }
}

/// Rolls out `K` episodes of `actor` on `task`. Environment and policy draw
/// from the same stream, so a fixed stream gives a fixed rollout.
pub fn rollout(env: &dyn MetaMdp, task: &Task, actor: &(impl Actor + ?Sized), rng: &mut RandomStream) -> MetaRollout {
    let (k_eps, horizon, gamma) = (env.episodes(), env.horizon(), env.gamma());
    let mut episodes = Vec::with_capacity(k_eps);
    let (mut slip_sum, mut slip_count) = (0.0, 0);
    let mut total = 0.0;
    for episode in 0..k_eps {
        let mut state = env.initial_state(task, rng);
        let mut steps = Vec::with_capacity(horizon);
        let mut discount = 1.0;
        for step in 0..horizon {
            let ctx = Context { state, episode, step, slip_sum, slip_count };
            let action = actor.act(env, &ctx, rng);
            let out = env.step(task, state, action, rng);
            (slip_sum, slip_count) = advance(&ctx, &out);
            total += discount * out.reward;
            discount *= gamma;
            steps.push(Transition { ctx, action, reward: out.reward, flagged: out.flagged });
            state = out.next;
        }
        episodes.push(steps);
    }
    MetaRollout { task: task.clone(), episodes, ret: total / k_eps as f64 }
}

/// Every possible meta-rollout of `actor` on `task` with its probability.
pub fn enumerate_rollouts(
    env: &dyn EnumerableMdp,
    task: &Task,
    actor: &(impl Actor + ?Sized),
) -> Result<Vec<(f64, MetaRollout)>> {
    let k_eps = env.episodes();
    let horizon = env.horizon();
    let max_init = env.initial_distribution(task).len().max(1) as u128;
    let mut max_branch = 1u128;
    for s in 0..env.n_states() {
        for a in 0..env.n_actions() {
            max_branch = max_branch.max(env.transitions(task, s, a).len() as u128);
        }
    }
    let per_step = max_branch * env.n_actions() as u128;
    let mut required = 1u128;
    for _ in 0..k_eps {
        required = required.saturating_mul(max_init);
        for _ in 0..horizon {
            required = required.saturating_mul(per_step);
        }
    }
    if required > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { required, limit: ENUMERATION_LIMIT });
    }

    struct Walker<'a, A: ?Sized> {
        env: &'a dyn EnumerableMdp,
        task: &'a Task,
        actor: &'a A,
        out: Vec<(f64, MetaRollout)>,
    }

    impl<A: Actor + ?Sized> Walker<'_, A> {
        fn episode_start(&mut self, prob: f64, episodes: &mut Vec<Vec<Transition>>, slip: (f64, usize)) {
            let episode = episodes.len();
            if episode == self.env.episodes() {
                let r = MetaRollout { task: self.task.clone(), episodes: episodes.clone(), ret: 0.0 };
                let ret = r.recompute_return(self.env.gamma());
                self.out.push((prob, MetaRollout { ret, ..r }));
                return;
            }
            for (p0, s0) in self.env.initial_distribution(self.task) {
                if p0 == 0.0 {
                    continue;
                }
                episodes.push(Vec::with_capacity(self.env.horizon()));
                self.step(prob * p0, s0, episodes, slip);
                episodes.pop();
            }
        }

        fn step(&mut self, prob: f64, state: usize, episodes: &mut Vec<Vec<Transition>>, slip: (f64, usize)) {
            let episode = episodes.len() - 1;
            let step = episodes[episode].len();
            if step == self.env.horizon() {
                self.episode_start(prob, episodes, slip);
                return;
            }
            let ctx = Context { state, episode, step, slip_sum: slip.0, slip_count: slip.1 };
            let probs = self.actor.action_probs(self.env as &dyn MetaMdp, &ctx);
            for (action, &pa) in probs.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (pt, out) in self.env.transitions(self.task, state, action) {
                    if pt == 0.0 {
                        continue;
                    }
                    episodes[episode].push(Transition { ctx, action, reward: out.reward, flagged: out.flagged });
                    self.step(prob * pa * pt, out.next, episodes, advance(&ctx, &out));
                    episodes[episode].pop();
                }
            }
        }
    }

    let mut walker = Walker { env, task, actor, out: Vec::new() };
    walker.episode_start(1.0, &mut Vec::with_capacity(k_eps), (0.0, 0));
    Ok(walker.out)
}

/// Exact return distribution of `actor` on `task` as `(probability, return)` atoms.
pub fn enumerate_returns(env: &dyn EnumerableMdp, task: &Task, actor: &(impl Actor + ?Sized)) -> Result<Vec<(f64, f64)>> {
    Ok(enumerate_rollouts(env, task, actor)?.into_iter().map(|(p, r)| (p, r.ret)).collect())
}

// ---------------------------------------------------------------------------
// Khazad Dum

/// Grid moves in row/column offsets: left, right, up, down.
pub const MOVES: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
pub const ACTION_NAMES: [&str; 4] = ["left", "right", "up", "down"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KhazadDumConfig {
    pub rows: usize,
    pub cols: usize,
    pub horizon: usize,
    pub episodes: usize,
    /// Abyss cells as `(row, col)`; row 0 is the top of the map.
    pub abyss: Vec<(usize, usize)>,
    pub bridge: Vec<(usize, usize)>,
    pub goal: (usize, usize),
    pub start: Vec<(usize, usize)>,
    /// L1 distance below which the step cost shrinks linearly to 0.
    pub shaping_radius: f64,
    /// Goal reward in units of `1/T`.
    pub goal_reward: f64,
    /// Per-step damage on the bridge is `rain_damage * tau / T`.
    pub rain_damage: f64,
    pub rain: TaskDistribution,
    /// Width of the Gaussian kernel of the soft one-hot observation; 0 gives a hard one-hot.
    pub kernel_width: f64,
}

impl Default for KhazadDumConfig {
    /// 12x12 map. The abyss fills rows 5-7 from column 0 to 3 and the bridge
    /// is column 4 of those rows; the open ground from column 5 is the way
    /// around. Agents start in the bottom-left 3x3 block; the goal is above
    /// the bridge.
    fn default() -> Self {
        let mut abyss = Vec::new();
        let mut bridge = Vec::new();
        for r in 5..=7 {
            for c in 0..=4 {
                if c == 4 {
                    bridge.push((r, c));
                } else {
                    abyss.push((r, c));
                }
            }
        }
        let start = (9..=11).flat_map(|r| (0..=2).map(move |c| (r, c))).collect();
        KhazadDumConfig {
            rows: 12,
            cols: 12,
            horizon: 32,
            episodes: 4,
            abyss,
            bridge,
            goal: (3, 4),
            start,
            shaping_radius: 5.0,
            goal_reward: 5.0,
            rain_damage: 3.0,
            rain: TaskDistribution::Exponential { rate: 10.0 },
            kernel_width: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Open,
    Abyss,
    Bridge,
    Goal,
}

#[derive(Debug, Clone)]
pub struct KhazadDum {
    config: KhazadDumConfig,
    cells: Vec<Cell>,
    start: Vec<usize>,
    features: Vec<Vec<f64>>,
}

impl KhazadDum {
    pub fn new(config: KhazadDumConfig) -> Result<Self> {
        let (rows, cols) = (config.rows, config.cols);
        if rows == 0 || cols == 0 || config.horizon == 0 || config.episodes == 0 {
            return Err(Error::InvalidConfig("grid size, horizon and episodes must be positive".into()));
        }
        if !(config.kernel_width >= 0.0) || !(config.shaping_radius > 0.0) {
            return Err(Error::InvalidConfig("kernel_width must be >= 0 and shaping_radius > 0".into()));
        }
        config.rain.validate()?;
        if config.rain.dim() != 1 {
            return Err(Error::InvalidConfig("rain distribution must be one-dimensional".into()));
        }
        let inside = |&(r, c): &(usize, usize)| r < rows && c < cols;
        let all = config.abyss.iter().chain(&config.bridge).chain(&config.start).chain(std::iter::once(&config.goal));
        if let Some(&(r, c)) = all.clone().find(|p| !inside(p)) {
            return Err(Error::InvalidConfig(format!("cell ({r}, {c}) lies outside the {rows}x{cols} grid")));
        }
        let mut cells = vec![Cell::Open; rows * cols];
        for &(r, c) in &config.abyss {
            cells[r * cols + c] = Cell::Abyss;
        }
        for &(r, c) in &config.bridge {
            cells[r * cols + c] = Cell::Bridge;
        }
        let goal = config.goal.0 * cols + config.goal.1;
        if cells[goal] != Cell::Open {
            return Err(Error::InvalidConfig("goal must be an open cell".into()));
        }
        cells[goal] = Cell::Goal;
        if config.start.is_empty() {
            return Err(Error::InvalidConfig("start region is empty".into()));
        }
        let start: Vec<usize> = config.start.iter().map(|&(r, c)| r * cols + c).collect();
        if start.iter().any(|&s| cells[s] != Cell::Open) {
            return Err(Error::InvalidConfig("start cells must be open".into()));
        }
        let features = (0..rows * cols).map(|s| soft_one_hot(rows, cols, s, config.kernel_width)).collect();
        let env = KhazadDum { config, cells, start, features };
        for &s in &env.start {
            if env.shortest_path(s, |_| true).is_none() {
                return Err(Error::InvalidConfig("goal unreachable from a start cell".into()));
            }
        }
        Ok(env)
    }

    pub fn config(&self) -> &KhazadDumConfig {
        &self.config
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.config.cols + col
    }

    pub fn coords(&self, state: usize) -> (usize, usize) {
        (state / self.config.cols, state % self.config.cols)
    }

    pub fn goal_state(&self) -> usize {
        self.cell_index(self.config.goal.0, self.config.goal.1)
    }

    pub fn start_states(&self) -> &[usize] {
        &self.start
    }

    pub fn is_abyss(&self, state: usize) -> bool {
        self.cells[state] == Cell::Abyss
    }

    pub fn is_bridge(&self, state: usize) -> bool {
        self.cells[state] == Cell::Bridge
    }

    pub fn is_goal(&self, state: usize) -> bool {
        self.cells[state] == Cell::Goal
    }

    pub fn distance_to_goal(&self, state: usize) -> usize {
        let (r, c) = self.coords(state);
        r.abs_diff(self.config.goal.0) + c.abs_diff(self.config.goal.1)
    }

    /// Step cost before any rain damage, by the L1 distance after the move.
    pub fn shaped_cost(&self, state: usize) -> f64 {
        let t = self.config.horizon as f64;
        let d = self.distance_to_goal(state) as f64;
        (d / self.config.shaping_radius).min(1.0) / t
    }

    /// Target cell of a displacement, or the same cell when it would leave the grid.
    fn displaced(&self, state: usize, dr: i64, dc: i64) -> usize {
        let (r, c) = self.coords(state);
        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
        if nr < 0 || nc < 0 || nr >= self.config.rows as i64 || nc >= self.config.cols as i64 {
            state
        } else {
            self.cell_index(nr as usize, nc as usize)
        }
    }

    /// Deterministic move ignoring rain.
    pub fn move_to(&self, state: usize, action: usize) -> usize {
        let (dr, dc) = MOVES[action];
        self.displaced(state, dr, dc)
    }

    /// One transition with the rain sampled from `rng`.
    pub fn khazad_dum_step(&self, state: usize, action: usize, tau: f64, rng: &mut RandomStream) -> StepOutcome {
        let t = self.config.horizon as f64;
        match self.cells[state] {
            Cell::Abyss => return StepOutcome { next: state, reward: -1.0 / t, slip: 0.0, flagged: false },
            Cell::Goal => return StepOutcome { next: state, reward: 0.0, slip: 0.0, flagged: false },
            _ => {}
        }
        let (dr, dc) = MOVES[action];
        let on_bridge = self.cells[state] == Cell::Bridge;
        let (next, slip, damage) = if on_bridge && tau > 0.0 {
            let nr: f64 = StandardNormal.sample(rng);
            let nc: f64 = StandardNormal.sample(rng);
            let (nr, nc) = (tau * nr, tau * nc);
            let dr = (dr as f64 + nr).round().clamp(-1.0, 1.0) as i64;
            let dc = (dc as f64 + nc).round().clamp(-1.0, 1.0) as i64;
            (self.displaced(state, dr, dc), nr.abs() + nc.abs(), self.config.rain_damage * tau / t)
        } else {
            (self.displaced(state, dr, dc), 0.0, 0.0)
        };
        let reward = match self.cells[next] {
            Cell::Goal => self.config.goal_reward / t,
            Cell::Abyss => -1.0 / t,
            _ => -self.shaped_cost(next),
        } - damage;
        StepOutcome { next, reward, slip, flagged: on_bridge }
    }

    /// Breadth-first shortest path to the goal through cells allowed by `ok`.
    pub fn shortest_path(&self, from: usize, ok: impl Fn(usize) -> bool) -> Option<Vec<usize>> {
        let n = self.cells.len();
        let mut prev = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::from([from]);
        prev[from] = from;
        while let Some(s) = queue.pop_front() {
            if self.is_goal(s) {
                let mut actions = Vec::new();
                let mut cur = s;
                while cur != from {
                    let p = prev[cur];
                    actions.push((0..4).find(|&a| self.move_to(p, a) == cur).expect("adjacent cells"));
                    cur = p;
                }
                actions.reverse();
                return Some(actions);
            }
            if self.is_abyss(s) {
                continue;
            }
            for a in 0..4 {
                let next = self.move_to(s, a);
                if prev[next] == usize::MAX && ok(next) {
                    prev[next] = s;
                    queue.push_back(next);
                }
            }
        }
        None
    }

    /// ASCII picture of the map: `#` abyss, `=` bridge, `G` goal, `S` start, `.` open.
    pub fn ascii_map(&self) -> String {
        let mut out = String::new();
        for r in 0..self.config.rows {
            for c in 0..self.config.cols {
                let s = self.cell_index(r, c);
                out.push(match self.cells[s] {
                    Cell::Abyss => '#',
                    Cell::Bridge => '=',
                    Cell::Goal => 'G',
                    Cell::Open if self.start.contains(&s) => 'S',
                    Cell::Open => '.',
                });
            }
            out.push('\n');
        }
        out
    }
}

/// Normalized Gaussian bump over the grid centered on `state`.
pub fn soft_one_hot(rows: usize, cols: usize, state: usize, width: f64) -> Vec<f64> {
    let mut v = vec![0.0; rows * cols];
    if width == 0.0 {
        v[state] = 1.0;
        return v;
    }
    let (r0, c0) = ((state / cols) as f64, (state % cols) as f64);
    for (j, x) in v.iter_mut().enumerate() {
        let (r, c) = ((j / cols) as f64, (j % cols) as f64);
        let d2 = (r - r0).powi(2) + (c - c0).powi(2);
        *x = (-d2 / (2.0 * width * width)).exp();
    }
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

impl MetaMdp for KhazadDum {
    fn name(&self) -> &str {
        "khazad_dum"
    }
    fn n_states(&self) -> usize {
        self.cells.len()
    }
    fn n_actions(&self) -> usize {
        4
    }
    fn horizon(&self) -> usize {
        self.config.horizon
    }
    fn episodes(&self) -> usize {
        self.config.episodes
    }
    fn gamma(&self) -> f64 {
        1.0
    }
    fn initial_state(&self, _task: &Task, rng: &mut RandomStream) -> usize {
        self.start[rng.random_range(0..self.start.len())]
    }
    fn step(&self, task: &Task, state: usize, action: usize, rng: &mut RandomStream) -> StepOutcome {
        self.khazad_dum_step(state, action, task.first(), rng)
    }
    fn observe(&self, state: usize) -> &[f64] {
        &self.features[state]
    }
    fn check_task(&self, task: &Task) -> Result<()> {
        if task.dim() != 1 || !(task.first() >= 0.0) || !task.first().is_finite() {
            return Err(domain(format!("rain intensity must be a finite nonnegative scalar, got {:?}", task.values())));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Chain

/// Three-state chain for exact enumeration. Task `(slip, offset)`.
///
/// Action 1 advances one state (staying at the end) but with probability
/// `slip` the agent stays put; action 0 moves back one state. Every step pays
/// `offset + state_reward[next] - action_cost[action]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMdp {
    pub horizon: usize,
    pub episodes: usize,
    pub gamma: f64,
    pub state_reward: [f64; 3],
    pub action_cost: [f64; 2],
    #[serde(skip)]
    features: Vec<Vec<f64>>,
}

impl Default for ChainMdp {
    fn default() -> Self {
        ChainMdp::new(2, 1, 1.0, [0.0, 0.5, 1.5], [0.0, 0.2])
    }
}

impl ChainMdp {
    pub fn new(horizon: usize, episodes: usize, gamma: f64, state_reward: [f64; 3], action_cost: [f64; 2]) -> Self {
        let features = (0..3).map(|s| (0..3).map(|j| if j == s { 1.0 } else { 0.0 }).collect()).collect();
        ChainMdp { horizon, episodes, gamma, state_reward, action_cost, features }
    }

    pub fn task(slip: f64, offset: f64) -> Task {
        Task(vec![slip, offset])
    }

    fn outcome(&self, task: &Task, action: usize, next: usize) -> StepOutcome {
        StepOutcome {
            next,
            reward: task.0[1] + self.state_reward[next] - self.action_cost[action],
            slip: 0.0,
            flagged: false,
        }
    }
}

impl MetaMdp for ChainMdp {
    fn name(&self) -> &str {
        "chain"
    }
    fn n_states(&self) -> usize {
        3
    }
    fn n_actions(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn episodes(&self) -> usize {
        self.episodes
    }
    fn gamma(&self) -> f64 {
        self.gamma
    }
    fn initial_state(&self, _task: &Task, _rng: &mut RandomStream) -> usize {
        0
    }
    fn step(&self, task: &Task, state: usize, action: usize, rng: &mut RandomStream) -> StepOutcome {
        let outcomes = self.transitions(task, state, action);
        let probs: Vec<f64> = outcomes.iter().map(|(p, _)| *p).collect();
        outcomes[sample_categorical(&probs, rng)].1
    }
    fn observe(&self, state: usize) -> &[f64] {
        &self.features[state]
    }
    fn check_task(&self, task: &Task) -> Result<()> {
        if task.dim() != 2 || !(0.0..=1.0).contains(&task.0[0]) || !task.0[1].is_finite() {
            return Err(domain(format!("chain task must be (slip in [0,1], finite offset), got {:?}", task.values())));
        }
        Ok(())
    }
}

impl EnumerableMdp for ChainMdp {
    fn initial_distribution(&self, _task: &Task) -> Vec<(f64, usize)> {
        vec![(1.0, 0)]
    }
    fn transitions(&self, task: &Task, state: usize, action: usize) -> Vec<(f64, StepOutcome)> {
        if action == 0 {
            return vec![(1.0, self.outcome(task, 0, state.saturating_sub(1)))];
        }
        let slip = task.0[0];
        let ahead = (state + 1).min(2);
        vec![(1.0 - slip, self.outcome(task, 1, ahead)), (slip, self.outcome(task, 1, state))]
    }
}

// ---------------------------------------------------------------------------
// Bandit

/// One-step bandit: every arm pays from a finite reward distribution.
/// The task is ignored; it exists for the ordinary (single-task) RL contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditMdp {
    /// Per arm, `(probability, reward)` atoms.
    pub arms: Vec<Vec<(f64, f64)>>,
    #[serde(skip)]
    features: Vec<Vec<f64>>,
}

impl BanditMdp {
    pub fn new(arms: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::InvalidConfig("bandit needs at least one arm".into()));
        }
        for (i, arm) in arms.iter().enumerate() {
            let total: f64 = arm.iter().map(|(p, _)| p).sum();
            if arm.iter().any(|(p, r)| !(*p >= 0.0) || !r.is_finite()) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!("arm {i} is not a probability distribution")));
            }
        }
        Ok(BanditMdp { arms, features: vec![vec![1.0]] })
    }
}

impl MetaMdp for BanditMdp {
    fn name(&self) -> &str {
        "bandit"
    }
    fn n_states(&self) -> usize {
        1
    }
    fn n_actions(&self) -> usize {
        self.arms.len()
    }
    fn horizon(&self) -> usize {
        1
    }
    fn episodes(&self) -> usize {
        1
    }
    fn gamma(&self) -> f64 {
        1.0
    }
    fn initial_state(&self, _task: &Task, _rng: &mut RandomStream) -> usize {
        0
    }
    fn step(&self, _task: &Task, _state: usize, action: usize, rng: &mut RandomStream) -> StepOutcome {
        let probs: Vec<f64> = self.arms[action].iter().map(|(p, _)| *p).collect();
        let reward = self.arms[action][sample_categorical(&probs, rng)].1;
        StepOutcome { next: 0, reward, slip: 0.0, flagged: false }
    }
    fn observe(&self, _state: usize) -> &[f64] {
        &self.features[0]
    }
    fn check_task(&self, _task: &Task) -> Result<()> {
        Ok(())
    }
}

impl EnumerableMdp for BanditMdp {
    fn initial_distribution(&self, _task: &Task) -> Vec<(f64, usize)> {
        vec![(1.0, 0)]
    }
    fn transitions(&self, _task: &Task, _state: usize, action: usize) -> Vec<(f64, StepOutcome)> {
        self.arms[action]
            .iter()
            .map(|&(p, reward)| (p, StepOutcome { next: 0, reward, slip: 0.0, flagged: false }))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Follows a fixed action list, then repeats its last action.
    struct Scripted(Vec<usize>);

    impl Actor for Scripted {
        fn action_probs(&self, env: &dyn MetaMdp, ctx: &Context) -> Vec<f64> {
            let a = *self.0.get(ctx.step).or(self.0.last()).unwrap_or(&0);
            (0..env.n_actions()).map(|i| if i == a { 1.0 } else { 0.0 }).collect()
        }
    }

    struct Uniform;

    impl Actor for Uniform {
        fn action_probs(&self, env: &dyn MetaMdp, _ctx: &Context) -> Vec<f64> {
            vec![1.0 / env.n_actions() as f64; env.n_actions()]
        }
    }

    fn kd() -> KhazadDum {
        KhazadDum::new(KhazadDumConfig::default()).unwrap()
    }

    #[test]
    fn default_map_layout() {
        let env = kd();
        let expected = "\
............
............
............
....G.......
............
####=.......
####=.......
####=.......
............
SSS.........
SSS.........
SSS.........
";
        assert_eq!(env.ascii_map(), expected);
    }

    #[test]
    fn bridge_is_the_only_way_through_the_abyss_columns() {
        let env = kd();
        // without the bridge a path still exists, around the end of the abyss
        let s = env.cell_index(10, 1);
        let short = env.shortest_path(s, |_| true).unwrap();
        let long = env.shortest_path(s, |c| !env.is_bridge(c)).unwrap();
        assert_eq!((short.len(), long.len()), (10, 12));
        for &start in env.start_states() {
            assert!(env.shortest_path(start, |_| true).is_some());
        }
    }

    #[test]
    fn shaped_cost_profile() {
        let env = kd();
        let t = 32.0;
        assert_eq!(env.shaped_cost(env.goal_state()), 0.0);
        assert!((env.shaped_cost(env.cell_index(3, 6)) - 0.4 / t).abs() < 1e-15);
        assert!((env.shaped_cost(env.cell_index(3, 9)) - 1.0 / t).abs() < 1e-15);
        assert!((env.shaped_cost(env.cell_index(11, 11)) - 1.0 / t).abs() < 1e-15);
    }

    fn scripted_episode_return(env: &KhazadDum, start: usize, actions: &[usize], tau: f64) -> (f64, usize) {
        let mut rng = stream(0, &[]);
        let mut s = start;
        let mut total = 0.0;
        for t in 0..32 {
            let a = actions.get(t).copied().unwrap_or(2);
            let out = env.khazad_dum_step(s, a, tau, &mut rng);
            total += out.reward;
            s = out.next;
        }
        (total, s)
    }

    #[test]
    fn short_path_without_rain() {
        let env = kd();
        let start = env.cell_index(10, 1);
        let path = env.shortest_path(start, |_| true).unwrap();
        let (ret, end) = scripted_episode_return(&env, start, &path, 0.0);
        assert_eq!(end, env.goal_state());
        // hand sum of after-step costs along the path, then the goal bonus
        let mut s = start;
        let mut expected = 0.0;
        for &a in &path {
            s = env.move_to(s, a);
            if !env.is_goal(s) {
                expected -= env.shaped_cost(s);
            }
        }
        expected += 5.0 / 32.0;
        assert!((ret - expected).abs() < 1e-12);
        assert!(path.iter().scan(start, |s, &a| {
            *s = env.move_to(*s, a);
            Some(*s)
        })
        .any(|c| env.is_bridge(c)));
    }

    #[test]
    fn falling_in_costs_one() {
        let env = kd();
        // (8, 0) is right below the abyss
        let start = env.cell_index(8, 0);
        for &tau in &[0.0, 0.3, 5.0] {
            let (ret, end) = scripted_episode_return(&env, start, &[2], tau);
            assert!(env.is_abyss(end));
            assert!((ret + 1.0).abs() < 1e-12, "tau {tau}: {ret}");
        }
    }

    #[test]
    fn goal_is_absorbing_without_costs() {
        let env = kd();
        let mut rng = stream(1, &[]);
        for a in 0..4 {
            let out = env.khazad_dum_step(env.goal_state(), a, 1.0, &mut rng);
            assert_eq!(out.next, env.goal_state());
            assert_eq!(out.reward, 0.0);
        }
    }

    #[test]
    fn rain_only_on_the_bridge() {
        let env = kd();
        let mut rng = stream(2, &[]);
        let off = env.cell_index(10, 1);
        for _ in 0..100 {
            let out = env.khazad_dum_step(off, 2, 3.0, &mut rng);
            assert_eq!(out.next, env.cell_index(9, 1));
            assert_eq!(out.slip, 0.0);
            assert!(!out.flagged);
        }
        let on = env.cell_index(7, 4);
        let out = env.khazad_dum_step(on, 2, 0.0, &mut rng);
        assert_eq!(out.next, env.cell_index(6, 4));
        assert!(out.flagged);
        assert!((out.reward + env.shaped_cost(env.cell_index(6, 4))).abs() < 1e-15);
        // heavy rain: charged damage, sometimes thrown sideways into the abyss on the left
        let mut fell = 0;
        for _ in 0..1000 {
            let out = env.khazad_dum_step(on, 2, 0.5, &mut rng);
            assert!(out.flagged);
            if env.is_abyss(out.next) {
                fell += 1;
                assert!((out.reward - (-1.0 / 32.0 - 3.0 * 0.5 / 32.0)).abs() < 1e-15);
            }
        }
        // P(N(0, 0.25) < -0.5) = 0.1587
        assert!((120..200).contains(&fell), "{fell}");
    }

    #[test]
    fn walls_keep_position() {
        let env = kd();
        let corner = env.cell_index(0, 0);
        assert_eq!(env.move_to(corner, 0), corner);
        assert_eq!(env.move_to(corner, 2), corner);
        let mut rng = stream(3, &[]);
        let out = env.khazad_dum_step(corner, 0, 0.0, &mut rng);
        assert_eq!(out.next, corner);
    }

    #[test]
    fn soft_one_hot_properties() {
        for s in [0, 17, 143] {
            let hard = soft_one_hot(12, 12, s, 0.0);
            assert_eq!(hard.iter().sum::<f64>(), 1.0);
            assert_eq!(hard[s], 1.0);
            let soft = soft_one_hot(12, 12, s, 0.5);
            assert!((soft.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let a = soft_one_hot(12, 12, 30, 0.5);
        let b = soft_one_hot(12, 12, 31, 0.5);
        let overlap: f64 = a.iter().zip(&b).map(|(x, y)| x.min(*y)).sum();
        assert!(overlap > 0.0);
        // direct kernel value at a neighbour relative to the centre
        assert!((a[31] / a[30] - (-2.0f64).exp()).abs() < 1e-12);
        let tiny = soft_one_hot(12, 12, 30, 1e-3);
        assert!((tiny[30] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rollout_return_matches_transitions() {
        let env = kd();
        for seed in 0..20 {
            let mut rng = stream(seed, &[]);
            let r = rollout(&env, &Task::scalar(0.3), &Uniform, &mut rng);
            assert_eq!(r.episodes.len(), 4);
            assert!(r.episodes.iter().all(|e| e.len() == 32));
            assert!((r.recompute_return(1.0) - r.ret).abs() < 1e-12);
            assert!(r.ret.is_finite());
            assert!(r.ret >= -(1.0 + 3.0 * 0.3 * 32.0));
            assert!(r.ret <= 5.0 / 32.0);
        }
    }

    #[test]
    fn rollout_without_rain_is_deterministic_given_starts() {
        let env = kd();
        let a = rollout(&env, &Task::scalar(0.0), &Scripted(vec![2; 32]), &mut stream(4, &[]));
        let b = rollout(&env, &Task::scalar(0.0), &Scripted(vec![2; 32]), &mut stream(4, &[]));
        assert_eq!(a, b);
    }

    #[test]
    fn history_accumulates_slip_across_episodes() {
        let env = kd();
        let r = rollout(&env, &Task::scalar(0.2), &Scripted(vec![0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2]), &mut stream(5, &[]));
        let mut count = 0;
        let mut last_sum = 0.0;
        for tr in r.transitions() {
            assert_eq!(tr.ctx.slip_count, count);
            assert!(tr.ctx.slip_sum >= last_sum);
            last_sum = tr.ctx.slip_sum;
            if tr.flagged {
                count += 1;
            }
        }
        assert!(count > 0);
        assert!(last_sum > 0.0);
        // the history carries over episode boundaries
        assert!(r.episodes[1][0].ctx.slip_count > 0);
    }

    #[test]
    fn chain_deterministic_single_atom() {
        let env = ChainMdp::default();
        let task = ChainMdp::task(0.0, 1.0);
        let atoms = enumerate_returns(&env, &task, &Scripted(vec![1, 1])).unwrap();
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms[0].0, 1.0);
        // 0 -> 1 -> 2: (1 + 0.5 - 0.2) + (1 + 1.5 - 0.2)
        assert!((atoms[0].1 - 3.6).abs() < 1e-12);
        let r = rollout(&env, &task, &Scripted(vec![1, 1]), &mut stream(6, &[]));
        assert!((r.ret - 3.6).abs() < 1e-12);
    }

    #[test]
    fn bandit_uniform_two_atoms() {
        let env = BanditMdp::new(vec![vec![(1.0, 0.0)], vec![(1.0, 1.0)]]).unwrap();
        let atoms = enumerate_returns(&env, &Task::scalar(0.0), &Uniform).unwrap();
        assert_eq!(atoms, vec![(0.5, 0.0), (0.5, 1.0)]);
    }

    #[test]
    fn chain_enumeration_matches_monte_carlo() {
        let env = ChainMdp::default();
        let task = ChainMdp::task(0.3, 0.0);
        let atoms = enumerate_returns(&env, &task, &Uniform).unwrap();
        let total: f64 = atoms.iter().map(|a| a.0).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mean: f64 = atoms.iter().map(|(p, r)| p * r).sum();
        let var: f64 = atoms.iter().map(|(p, r)| p * (r - mean).powi(2)).sum();

        let n = 1_000_000;
        let mut rng = stream(7, &[]);
        let mut hist = std::collections::BTreeMap::<i64, usize>::new();
        let mut sum = 0.0;
        for _ in 0..n {
            let r = rollout(&env, &task, &Uniform, &mut rng).ret;
            sum += r;
            *hist.entry((r * 1e6).round() as i64).or_default() += 1;
        }
        let mc_mean = sum / n as f64;
        assert!((mc_mean - mean).abs() < 4.0 * (var / n as f64).sqrt());

        let mut exact = std::collections::BTreeMap::<i64, f64>::new();
        for (p, r) in &atoms {
            *exact.entry((r * 1e6).round() as i64).or_default() += p;
        }
        assert_eq!(exact.keys().collect::<Vec<_>>(), hist.keys().collect::<Vec<_>>());
        for (k, p) in &exact {
            let freq = hist[k] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() < 5.0 * se, "atom {k}: {freq} vs {p}");
        }
    }

    #[test]
    fn enumeration_guard() {
        let env = ChainMdp::new(30, 1, 1.0, [0.0, 0.5, 1.5], [0.0, 0.2]);
        let err = enumerate_returns(&env, &ChainMdp::task(0.3, 0.0), &Uniform).unwrap_err();
        assert!(matches!(err, Error::EnumerationTooLarge { .. }));
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = KhazadDumConfig::default();
        c.goal = (6, 0);
        assert!(KhazadDum::new(c).is_err());
        let mut c = KhazadDumConfig::default();
        c.start.push((20, 0));
        assert!(KhazadDum::new(c).is_err());
        assert!(kd().check_task(&Task::scalar(-1.0)).is_err());
        assert!(BanditMdp::new(vec![vec![(0.4, 1.0)]]).is_err());
    }

    #[test]
    fn categorical_sampling_frequencies() {
        let mut rng = stream(8, &[]);
        let probs = [0.2, 0.0, 0.5, 0.3];
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_categorical(&probs, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        for (c, p) in counts.iter().zip(probs) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() <= 3.0 * se + 1e-12);
        }
    }
}
