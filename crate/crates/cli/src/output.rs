//! CSV and JSON outputs of a run directory.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json            config hash, build id, resolved run file
//! config.toml              resolved run file
//! runs/<alg>_s<seed>.csv   one row per training iteration
//! runs/<alg>_s<seed>.json  run summary
//! runs/<alg>_s<seed>_tasks.csv   final test tasks with their scores
//! aggregate.csv            evaluation curves across seeds, mean and 95% CI
//! final.csv                final metrics across seeds
//! per_task.csv             final scores by task bin
//! sampler.csv              sampling-distribution parameters over training
//! ```
//!
//! Every CSV is comma separated with a header row, UTF-8 and LF line ends.
//! Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use roml_core::metaalgo::{Algorithm, EvalPoint, Evaluation, TrainConfig, TrainRecord, TrainTrace};
use roml_core::experiment::ProblemSpec;
use roml_core::stats::{mean_ci95, MeanCi};

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn csv_string(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// A parsed CSV: header plus string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r.records().map(|rec| Ok(rec?.iter().map(String::from).collect())).collect::<Result<_>>()?;
        Ok(Table { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        match self.header.iter().position(|h| h == name) {
            Some(i) => Ok(i),
            None => bail!("missing column {name:?} (have: {})", self.header.join(", ")),
        }
    }

    pub fn require(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.column(n)).collect()
    }

    pub fn f64_at(&self, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        cell.parse().with_context(|| format!("row {}: {:?} in column {:?} is not a number", row + 2, cell, self.header[col]))
    }
}

/// Per-iteration CSV of one run.
pub fn run_csv(trace: &TrainTrace) -> Result<String> {
    let dim = trace.records.first().map_or(0, |r| r.phi.len());
    let mut header: Vec<String> =
        ["iteration", "frames", "train_mean_score", "n_selected", "n_learned"].map(String::from).to_vec();
    header.extend((0..dim).map(|j| format!("phi_{j}")));
    header.extend(["eval_mean".into(), "eval_cvar".into()]);
    header.extend(trace.extra_names.iter().map(|n| format!("eval_{n}")));
    header.push("checksum".into());
    let rows: Vec<Vec<String>> = trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.iteration.to_string(),
                r.frames.to_string(),
                fmt(r.train_mean_score),
                r.n_selected.to_string(),
                r.n_learned.to_string(),
            ];
            row.extend(r.phi.iter().map(|&p| fmt(p)));
            match &r.eval {
                Some(e) => {
                    row.extend([fmt(e.mean), fmt(e.cvar)]);
                    row.extend(e.extras.iter().map(|&x| fmt(x)));
                }
                None => row.extend(std::iter::repeat_n(String::new(), 2 + trace.extra_names.len())),
            }
            row.push(fmt(r.checksum));
            row
        })
        .collect();
    csv_string(&header, &rows)
}

/// Inverse of [`run_csv`]: the records and the extra metric names.
pub fn parse_run_csv(text: &str) -> Result<(Vec<TrainRecord>, Vec<String>)> {
    let t = Table::parse(text)?;
    let [it, fr, tm, ns, nl, em, ec, ck] =
        ["iteration", "frames", "train_mean_score", "n_selected", "n_learned", "eval_mean", "eval_cvar", "checksum"]
            .map(|c| t.column(c));
    let (it, fr, tm, ns, nl, em, ec, ck) = (it?, fr?, tm?, ns?, nl?, em?, ec?, ck?);
    let phi_cols: Vec<usize> = (0..).map_while(|j| t.column(&format!("phi_{j}")).ok()).collect();
    let extra_cols: Vec<usize> = (ec + 1..ck).collect();
    let extra_names = extra_cols.iter().map(|&c| t.header[c].trim_start_matches("eval_").to_string()).collect();
    let mut out = Vec::with_capacity(t.rows.len());
    for (i, row) in t.rows.iter().enumerate() {
        let int = |c: usize| row[c].parse::<usize>().with_context(|| format!("row {}: bad integer {:?}", i + 2, row[c]));
        let eval = if row[em].is_empty() {
            None
        } else {
            Some(EvalPoint {
                mean: t.f64_at(i, em)?,
                cvar: t.f64_at(i, ec)?,
                extras: extra_cols.iter().map(|&c| t.f64_at(i, c)).collect::<Result<_>>()?,
            })
        };
        out.push(TrainRecord {
            iteration: int(it)?,
            frames: int(fr)?,
            train_mean_score: t.f64_at(i, tm)?,
            n_selected: int(ns)?,
            n_learned: int(nl)?,
            phi: phi_cols.iter().map(|&c| t.f64_at(i, c)).collect::<Result<_>>()?,
            eval,
            checksum: t.f64_at(i, ck)?,
        });
    }
    Ok((out, extra_names))
}

/// Final test tasks of one run with their scores.
pub fn tasks_csv(eval: &Evaluation) -> Result<String> {
    let dim = eval.tasks.first().map_or(0, |t| t.dim());
    let mut header: Vec<String> = (0..dim).map(|j| format!("task_{j}")).collect();
    header.push("score".into());
    let rows: Vec<Vec<String>> = eval
        .tasks
        .iter()
        .zip(&eval.scores)
        .map(|(t, &s)| {
            let mut row: Vec<String> = t.values().iter().map(|&v| fmt(v)).collect();
            row.push(fmt(s));
            row
        })
        .collect();
    csv_string(&header, &rows)
}

/// JSON summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config_hash: String,
    pub build_id: String,
    pub train: TrainConfig,
    pub problem: ProblemSpec,
    pub final_mean: f64,
    pub final_cvar: f64,
    pub final_extras: BTreeMap<String, f64>,
    pub total_frames: usize,
    pub wall_time_secs: f64,
}

/// One finished (algorithm, seed) cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub trace: TrainTrace,
}

fn ci_row(prefix: Vec<String>, values: &[f64]) -> Result<Vec<String>> {
    let MeanCi { mean, lo, hi, n } = mean_ci95(values)?;
    let mut row = prefix;
    row.extend([fmt(mean), fmt(lo), fmt(hi), n.to_string()]);
    Ok(row)
}

fn by_algorithm(cells: &[CellResult]) -> Vec<(Algorithm, Vec<&CellResult>)> {
    let mut out: Vec<(Algorithm, Vec<&CellResult>)> = Vec::new();
    for c in cells {
        match out.iter_mut().find(|(a, _)| *a == c.algorithm) {
            Some((_, v)) => v.push(c),
            None => out.push((c.algorithm, vec![c])),
        }
    }
    for (_, v) in &mut out {
        v.sort_by_key(|c| c.seed);
    }
    out
}

fn metrics(point: &EvalPoint, names: &[String]) -> Vec<(String, f64)> {
    let mut m = vec![("mean".to_string(), point.mean), ("cvar".to_string(), point.cvar)];
    m.extend(names.iter().cloned().zip(point.extras.iter().copied()));
    m
}

/// Evaluation curves in long format: one row per (algorithm, iteration, metric).
pub fn aggregate_csv(cells: &[CellResult]) -> Result<String> {
    let header = ["algorithm", "iteration", "frames", "metric", "mean", "lo", "hi", "n"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for (alg, runs) in by_algorithm(cells) {
        let first = &runs[0].trace;
        for (k, rec) in first.records.iter().enumerate() {
            let Some(point) = &rec.eval else { continue };
            let names = metrics(point, &first.extra_names);
            for (j, (metric, _)) in names.iter().enumerate() {
                let values: Vec<f64> = runs
                    .iter()
                    .filter_map(|r| r.trace.records.get(k).and_then(|x| x.eval.as_ref()))
                    .map(|e| metrics(e, &first.extra_names)[j].1)
                    .collect();
                let prefix = vec![alg.name().into(), rec.iteration.to_string(), rec.frames.to_string(), metric.clone()];
                rows.push(ci_row(prefix, &values)?);
            }
        }
    }
    csv_string(&header, &rows)
}

/// Final metrics across seeds.
pub fn final_csv(cells: &[CellResult]) -> Result<String> {
    let header = ["algorithm", "metric", "mean", "lo", "hi", "n"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for (alg, runs) in by_algorithm(cells) {
        let names = &runs[0].trace.extra_names;
        let per_run: Vec<Vec<(String, f64)>> = runs
            .iter()
            .map(|r| {
                let e = &r.trace.final_eval;
                metrics(&EvalPoint { mean: e.mean, cvar: e.cvar, extras: e.extras.clone() }, names)
            })
            .collect();
        for (j, (metric, _)) in per_run[0].iter().enumerate() {
            let values: Vec<f64> = per_run.iter().map(|m| m[j].1).collect();
            rows.push(ci_row(vec![alg.name().into(), metric.clone()], &values)?);
        }
    }
    csv_string(&header, &rows)
}

/// Number of task bins in [`per_task_csv`].
pub const TASK_BINS: usize = 5;

/// Final test scores grouped into equal-count bins of the first task coordinate.
/// Each bin's score is averaged within a run, then across runs with a CI.
pub fn per_task_csv(cells: &[CellResult]) -> Result<String> {
    let header = ["algorithm", "bin", "bin_lo", "bin_hi", "mean", "lo", "hi", "n"].map(String::from).to_vec();
    let mut pooled: Vec<f64> =
        cells.iter().flat_map(|c| c.trace.final_eval.tasks.iter().map(|t| t.first())).collect();
    if pooled.is_empty() {
        return csv_string(&header, &[]);
    }
    pooled.sort_by(f64::total_cmp);
    let edge = |k: usize| pooled[((k * pooled.len()) / TASK_BINS).min(pooled.len() - 1)];
    let mut edges: Vec<f64> = (0..TASK_BINS).map(edge).collect();
    edges.push(*pooled.last().unwrap());
    let bin_of = |z: f64| (1..TASK_BINS).take_while(|&k| z >= edges[k]).count();
    let mut rows = Vec::new();
    for (alg, runs) in by_algorithm(cells) {
        for b in 0..TASK_BINS {
            let values: Vec<f64> = runs
                .iter()
                .filter_map(|r| {
                    let e = &r.trace.final_eval;
                    let s: Vec<f64> =
                        e.tasks.iter().zip(&e.scores).filter(|(t, _)| bin_of(t.first()) == b).map(|(_, &s)| s).collect();
                    (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
                })
                .collect();
            if values.is_empty() {
                continue;
            }
            let prefix = vec![alg.name().into(), b.to_string(), fmt(edges[b]), fmt(edges[b + 1])];
            rows.push(ci_row(prefix, &values)?);
        }
    }
    csv_string(&header, &rows)
}

/// Sampling-distribution parameters over training, across seeds.
pub fn sampler_csv(cells: &[CellResult]) -> Result<String> {
    let header = ["algorithm", "iteration", "param", "mean", "lo", "hi", "n"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for (alg, runs) in by_algorithm(cells) {
        for (k, rec) in runs[0].trace.records.iter().enumerate() {
            for j in 0..rec.phi.len() {
                let values: Vec<f64> = runs.iter().filter_map(|r| r.trace.records.get(k)).map(|r| r.phi[j]).collect();
                rows.push(ci_row(vec![alg.name().into(), rec.iteration.to_string(), format!("phi_{j}")], &values)?);
            }
        }
    }
    csv_string(&header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use roml_core::taskdist::Task;

    fn trace(extra: bool) -> TrainTrace {
        let names: Vec<String> = if extra { vec!["hazard_rate".into()] } else { vec![] };
        let records = (0..4)
            .map(|i| TrainRecord {
                iteration: i,
                frames: 128 * (i + 1),
                train_mean_score: -0.1 * i as f64 + 1e-17,
                n_selected: 3,
                n_learned: 16,
                phi: vec![10.0 / (i + 1) as f64],
                eval: (i % 2 == 1).then(|| EvalPoint {
                    mean: 0.1 + i as f64 / 3.0,
                    cvar: -1.0 / 7.0,
                    extras: if extra { vec![0.25] } else { vec![] },
                }),
                checksum: 1.0 / 3.0,
            })
            .collect();
        TrainTrace {
            algorithm: Algorithm::Roml,
            extra_names: names.clone(),
            records,
            sampler: vec![],
            naive_memory: vec![],
            final_eval: Evaluation {
                mean: 0.0,
                cvar: -1.0,
                tasks: vec![Task::scalar(0.5), Task::scalar(0.1)],
                scores: vec![-1.0, 0.0],
                extras: if extra { vec![0.5] } else { vec![] },
            },
            wall_time_secs: 1.0,
        }
    }

    #[test]
    fn run_csv_round_trips() {
        for extra in [false, true] {
            let t = trace(extra);
            let text = run_csv(&t).unwrap();
            assert!(!text.contains('\r'));
            let (records, names) = parse_run_csv(&text).unwrap();
            assert_eq!(records, t.records);
            assert_eq!(names, t.extra_names);
        }
    }

    #[test]
    fn tasks_csv_has_one_row_per_task() {
        let t = trace(true);
        let table = Table::parse(&tasks_csv(&t.final_eval).unwrap()).unwrap();
        assert_eq!(table.header, vec!["task_0", "score"]);
        assert_eq!(table.rows.len(), 2);
    }

    #[test]
    fn aggregates_have_expected_shape() {
        let cells: Vec<CellResult> =
            (0..3).map(|s| CellResult { algorithm: Algorithm::Roml, seed: s, trace: trace(true) }).collect();
        let agg = Table::parse(&aggregate_csv(&cells).unwrap()).unwrap();
        // two evaluated iterations times three metrics
        assert_eq!(agg.rows.len(), 6);
        // identical runs give a zero-width interval
        let (m, lo, hi) = (agg.column("mean").unwrap(), agg.column("lo").unwrap(), agg.column("hi").unwrap());
        assert_eq!(agg.rows[0][m], agg.rows[0][lo]);
        assert_eq!(agg.rows[0][m], agg.rows[0][hi]);
        let fin = Table::parse(&final_csv(&cells).unwrap()).unwrap();
        assert_eq!(fin.rows.len(), 3);
        let bins = Table::parse(&per_task_csv(&cells).unwrap()).unwrap();
        assert!(!bins.rows.is_empty());
        let sampler = Table::parse(&sampler_csv(&cells).unwrap()).unwrap();
        assert_eq!(sampler.rows.len(), 4);
    }

    #[test]
    fn missing_column_is_named() {
        let t = Table::parse("a,b\n1,2\n").unwrap();
        let err = t.require(&["a", "mean"]).unwrap_err().to_string();
        assert!(err.contains("\"mean\""), "{err}");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path().join("sub")).unwrap().count(), 1);
    }
}
