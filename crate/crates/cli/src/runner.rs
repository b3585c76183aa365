//! Runs every (algorithm, seed) cell of a run file on a bounded worker pool
//! and writes the output directory.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use roml_core::metaalgo::Algorithm;

use crate::config::RunFile;
use crate::output::{
    aggregate_csv, final_csv, per_task_csv, run_csv, sampler_csv, tasks_csv, write_atomic, CellResult, RunSummary,
};

/// Short git revision of the build, or `unknown`.
pub const BUILD_ID: &str = env!("ROML_BUILD_ID");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub build_id: String,
    pub config: RunFile,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Directory relative output paths resolve against.
    pub root: Option<PathBuf>,
    /// Cells run concurrently.
    pub threads: usize,
    /// Overwrite results of a different configuration.
    pub force: bool,
    /// Suppress per-cell progress lines on stderr.
    pub quiet: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { root: None, threads: 1, force: false, quiet: true }
    }
}

pub fn cell_stem(algorithm: Algorithm, seed: u64) -> String {
    format!("{}_s{seed}", algorithm.name())
}

/// Refuses to reuse a directory written under another configuration hash.
fn check_existing(dir: &Path, hash: &str, force: bool) -> Result<()> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Ok(());
    }
    let old: Manifest = serde_json::from_str(&std::fs::read_to_string(&path)?)
        .with_context(|| format!("reading {}", path.display()))?;
    if old.config_hash != hash && !force {
        bail!(
            "{} holds results of a different configuration (hash {} vs {}); rerun with --force to overwrite",
            dir.display(),
            &old.config_hash[..12.min(old.config_hash.len())],
            &hash[..12]
        );
    }
    Ok(())
}

/// Executes the run file and returns the output directory.
pub fn run(file: &RunFile, opts: &RunOptions) -> Result<PathBuf> {
    let experiment = file.experiment();
    experiment.validate()?;
    let dir = file.output_path(opts.root.as_deref());
    let hash = file.config_hash();
    check_existing(&dir, &hash, opts.force)?;
    std::fs::create_dir_all(dir.join("runs")).with_context(|| format!("creating {}", dir.display()))?;
    let manifest = Manifest { name: file.name.clone(), config_hash: hash.clone(), build_id: BUILD_ID.into(), config: file.clone() };
    write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    write_atomic(&dir.join("config.toml"), file.to_toml()?.as_bytes())?;

    let cells: Vec<(Algorithm, u64)> =
        experiment.algorithms.iter().flat_map(|&a| experiment.seeds.iter().map(move |&s| (a, s))).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, CellResult)>> = Mutex::new(Vec::new());
    let failure: Mutex<Option<anyhow::Error>> = Mutex::new(None);
    let workers = opts.threads.clamp(1, cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() || failure.lock().unwrap().is_some() {
                    break;
                }
                let (alg, seed) = cells[i];
                match run_cell(file, &dir, &hash, alg, seed) {
                    Ok(cell) => {
                        if !opts.quiet {
                            let e = &cell.trace.final_eval;
                            eprintln!(
                                "[{}/{}] {} seed {seed}: mean {:.4} cvar {:.4} ({:.1}s)",
                                i + 1,
                                cells.len(),
                                alg.name(),
                                e.mean,
                                e.cvar,
                                cell.trace.wall_time_secs
                            );
                        }
                        results.lock().unwrap().push((i, cell));
                    }
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e.context(format!("{} seed {seed}", alg.name())));
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);
    let cells: Vec<CellResult> = results.into_iter().map(|(_, c)| c).collect();
    write_atomic(&dir.join("aggregate.csv"), aggregate_csv(&cells)?.as_bytes())?;
    write_atomic(&dir.join("final.csv"), final_csv(&cells)?.as_bytes())?;
    write_atomic(&dir.join("per_task.csv"), per_task_csv(&cells)?.as_bytes())?;
    write_atomic(&dir.join("sampler.csv"), sampler_csv(&cells)?.as_bytes())?;
    Ok(dir)
}

fn run_cell(file: &RunFile, dir: &Path, hash: &str, algorithm: Algorithm, seed: u64) -> Result<CellResult> {
    let experiment = file.experiment();
    let out = experiment.run_cell(algorithm, seed)?;
    let trace = out.trace;
    let stem = dir.join("runs").join(cell_stem(algorithm, seed));
    let e = &trace.final_eval;
    let summary = RunSummary {
        name: file.name.clone(),
        algorithm,
        seed,
        config_hash: hash.into(),
        build_id: BUILD_ID.into(),
        train: experiment.cell(algorithm, seed),
        problem: file.problem.clone(),
        final_mean: e.mean,
        final_cvar: e.cvar,
        final_extras: trace.extra_names.iter().cloned().zip(e.extras.iter().copied()).collect(),
        total_frames: trace.total_frames(),
        wall_time_secs: trace.wall_time_secs,
    };
    write_atomic(&stem.with_extension("csv"), run_csv(&trace)?.as_bytes())?;
    write_atomic(&stem.with_extension("json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    write_atomic(&with_suffix(&stem, "_tasks.csv"), tasks_csv(e)?.as_bytes())?;
    Ok(CellResult { algorithm, seed, trace })
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
