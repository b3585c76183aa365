//! Experiment descriptions: which problem, which learner, which algorithms
//! and seeds. Shared by the command line and the integration suites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{BaselineRule, PgConfig};
use crate::metaalgo::{train, Algorithm, PolicySpec, RlProblem, TrainConfig, TrainTrace};
use crate::metamdp::{KhazadDum, KhazadDumConfig};
use crate::optim::OptimizerKind;
use crate::sinemeta::{run_supervised, sine_distribution, SineConfig};
use crate::taskdist::TaskDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    KhazadDum {
        #[serde(default)]
        env: KhazadDumConfig,
        #[serde(default = "default_policy")]
        policy: PolicySpec,
        #[serde(default)]
        learner: PgConfig,
    },
    Sine {
        #[serde(default)]
        sine: SineConfig,
    },
}

fn default_policy() -> PolicySpec {
    PolicySpec::Dense { hidden: vec![] }
}

impl ProblemSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::KhazadDum { .. } => "khazad_dum",
            ProblemSpec::Sine { .. } => "sine",
        }
    }

    /// The original task distribution.
    pub fn task_distribution(&self) -> Result<TaskDistribution> {
        match self {
            ProblemSpec::KhazadDum { env, .. } => Ok(env.rain.clone()),
            ProblemSpec::Sine { .. } => sine_distribution([0.5; 3]),
        }
    }

    pub fn supports(&self, algorithm: Algorithm) -> bool {
        !matches!((self, algorithm), (ProblemSpec::Sine { .. }, Algorithm::NaiveSampler))
    }
}

/// Outcome of one (algorithm, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub trace: TrainTrace,
    /// Final learned parameters.
    pub params: Vec<f64>,
}

pub fn run_one(problem: &ProblemSpec, config: &TrainConfig) -> Result<RunOutput> {
    match problem {
        ProblemSpec::KhazadDum { env, policy, learner } => {
            let env = KhazadDum::new(env.clone())?;
            let mut p = RlProblem::with_pg(&env, policy, learner.clone(), config.seed)?;
            let trace = train(&mut p, &env.config().rain, config)?;
            Ok(RunOutput { trace, params: p.learner.policy.params() })
        }
        ProblemSpec::Sine { sine } => {
            let (trace, p) = run_supervised(sine, config)?;
            Ok(RunOutput { trace, params: p.model.params })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    /// Per-run settings; `algorithm` and `seed` are overridden per cell.
    #[serde(default)]
    pub train: TrainConfig,
    pub problem: ProblemSpec,
}

impl ExperimentConfig {
    /// Khazad Dum at the reduced budget used by the behavioural checks.
    pub fn khazad_dum() -> Self {
        ExperimentConfig {
            name: "khazad_dum".into(),
            algorithms: Algorithm::ALL.to_vec(),
            seeds: (0..10).collect(),
            train: TrainConfig {
                alpha: 0.01,
                beta: 0.05,
                nu: 0.0,
                n_tasks: 64,
                m_rollouts: 1,
                iterations: 1000,
                eval_every: 50,
                eval_tasks: 500,
                final_eval_tasks: 1000,
                naive_memory: 100,
                ..Default::default()
            },
            problem: ProblemSpec::KhazadDum {
                env: KhazadDumConfig::default(),
                policy: default_policy(),
                learner: PgConfig {
                    lr: 0.01,
                    baseline: BaselineRule::ValueTable { lr: 0.1 },
                    reward_to_go: true,
                    entropy_coef: 0.01,
                    optimizer: OptimizerKind::Adam,
                    ..PgConfig::default()
                },
            },
        }
    }

    /// Sine regression with second-order MAML.
    pub fn sine() -> Self {
        ExperimentConfig {
            name: "sine".into(),
            algorithms: vec![Algorithm::Baseline, Algorithm::CvarMl, Algorithm::Roml],
            seeds: (0..10).collect(),
            train: TrainConfig {
                alpha: 0.05,
                beta: 0.2,
                nu: 0.0,
                n_tasks: 128,
                iterations: 1000,
                eval_every: 100,
                eval_tasks: 200,
                final_eval_tasks: 3000,
                ..Default::default()
            },
            problem: ProblemSpec::Sine { sine: SineConfig { outer_lr: 0.01, second_order: true, ..Default::default() } },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig("need at least one algorithm and one seed".into()));
        }
        for &a in &self.algorithms {
            if !self.problem.supports(a) {
                return Err(Error::InvalidConfig(format!("{} is not available for {}", a.name(), self.problem.kind())));
            }
            self.cell(a, self.seeds[0]).validate()?;
        }
        match &self.problem {
            ProblemSpec::KhazadDum { env, .. } => KhazadDum::new(env.clone()).map(|_| ()),
            ProblemSpec::Sine { sine } => sine.validate(),
        }
    }

    /// Training settings of one (algorithm, seed) cell.
    pub fn cell(&self, algorithm: Algorithm, seed: u64) -> TrainConfig {
        TrainConfig { algorithm, seed, ..self.train.clone() }
    }

    pub fn run_cell(&self, algorithm: Algorithm, seed: u64) -> Result<RunOutput> {
        run_one(&self.problem, &self.cell(algorithm, seed))
    }
}
