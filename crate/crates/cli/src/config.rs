//! TOML run files.
//!
//! A run file lists the algorithms and seeds to run plus the training and
//! problem settings. Unknown keys are rejected, and every parse error carries
//! the line and column it refers to.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use roml_core::experiment::{ExperimentConfig, ProblemSpec};
use roml_core::metaalgo::{Algorithm, TrainConfig};

/// Environment variable naming the directory that relative output paths resolve against.
pub const OUTPUT_ROOT_VAR: &str = "ROML_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub name: String,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    /// Where results go; defaults to the experiment name.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    pub problem: ProblemSpec,
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: RunFile = toml::from_str(text).map_err(|e| anyhow::anyhow!(locate(text, &e)))?;
        file.experiment().validate().context("invalid run file")?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn from_experiment(experiment: ExperimentConfig) -> Self {
        RunFile {
            name: experiment.name,
            algorithms: experiment.algorithms,
            seeds: experiment.seeds,
            output_dir: None,
            train: experiment.train,
            problem: experiment.problem,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            name: self.name.clone(),
            algorithms: self.algorithms.clone(),
            seeds: self.seeds.clone(),
            train: self.train.clone(),
            problem: self.problem.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Output directory: `output_dir` or the name, under `root` when relative.
    pub fn output_path(&self, root: Option<&Path>) -> PathBuf {
        let dir = self.output_dir.clone().unwrap_or_else(|| PathBuf::from(&self.name));
        match root {
            Some(r) if dir.is_relative() => r.join(dir),
            _ => dir,
        }
    }

    /// SHA-256 of the settings that determine results. The output directory,
    /// the thread count and the seed list are left out, so adding seeds keeps
    /// earlier runs valid.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::json!({
            "train": TrainConfig { threads: 1, seed: 0, algorithm: Algorithm::Baseline, ..self.train.clone() },
            "problem": self.problem,
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Turns a TOML error into a `line L, column C: message` report.
fn locate(text: &str, err: &toml::de::Error) -> String {
    let msg = err.message();
    match err.span() {
        Some(span) => {
            let (line, col) = line_col(text, span.start);
            format!("line {line}, column {col}: {msg}")
        }
        None => format!("{msg}"),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// Reads a run file or one of the built-in presets (`preset:khazad_dum`, `preset:sine`).
pub fn load_any(spec: &str) -> Result<RunFile> {
    match spec.strip_prefix("preset:") {
        Some("khazad_dum") => Ok(RunFile::from_experiment(ExperimentConfig::khazad_dum())),
        Some("sine") => Ok(RunFile::from_experiment(ExperimentConfig::sine())),
        Some(other) => bail!("unknown preset {other:?}; available: khazad_dum, sine"),
        None => RunFile::load(Path::new(spec)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
name = "tiny"
algorithms = ["baseline", "roml"]
seeds = [0, 1]

[train]
n_tasks = 4
iterations = 3

[problem]
kind = "khazad_dum"
"#;

    #[test]
    fn parses_with_defaults() {
        let f = RunFile::parse(SMALL).unwrap();
        assert_eq!(f.train.n_tasks, 4);
        assert_eq!(f.train.alpha, TrainConfig::default().alpha);
        assert_eq!(f.output_path(Some(Path::new("/out"))), PathBuf::from("/out/tiny"));
        let back = RunFile::parse(&f.to_toml().unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = SMALL.replace("iterations = 3", "iterations = 3\nitertions = 4");
        let err = RunFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("line 9"), "{err}");
        assert!(err.contains("itertions"), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let text = SMALL.replace("seeds = [0, 1]\n", "");
        let err = RunFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("seeds"), "{err}");
    }

    #[test]
    fn semantic_errors_are_rejected() {
        let text = SMALL.replace("iterations = 3", "iterations = 3\nalpha = 1.5");
        assert!(RunFile::parse(&text).is_err());
    }

    #[test]
    fn hash_ignores_seeds_and_threads() {
        let a = RunFile::parse(SMALL).unwrap();
        let mut b = a.clone();
        b.seeds.push(7);
        b.train.threads = 4;
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.config_hash(), b.config_hash());
        b.train.iterations = 4;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
