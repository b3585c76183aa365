use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use roml_cli::config::{load_any, OUTPUT_ROOT_VAR};
use roml_cli::output::{write_atomic, Table};
use roml_cli::plot::{render, PlotKind};
use roml_cli::runner::{run, RunOptions, BUILD_ID};
use roml_core::experiment::ProblemSpec;
use roml_core::metamdp::{KhazadDum, KhazadDumConfig};
use roml_core::oracles::{run_oracle_suite, Fault, OracleReport};

#[derive(Parser)]
#[command(name = "roml", about = "CVaR meta-learning and robust task sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, seed) cell of a run file.
    Run {
        /// Run file, or `preset:khazad_dum` / `preset:sine`.
        config: String,
        /// Cells run concurrently.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Output root for relative output directories [env: ROML_OUTPUT_ROOT].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite results written under a different configuration.
        #[arg(long)]
        force: bool,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Check the gradient estimators against exact enumeration.
    OracleCheck {
        /// Print the reports as JSON.
        #[arg(long)]
        json: bool,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Draw an SVG chart from an aggregate CSV.
    Plot {
        csv: PathBuf,
        /// curve, per-task-bar or sampler-trace.
        #[arg(long, default_value = "curve")]
        kind: PlotKind,
        /// Metric drawn by `curve`.
        #[arg(long, default_value = "cvar")]
        metric: String,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Print the Khazad Dum map.
    DumpMap {
        /// Run file whose map to print; the default map otherwise.
        config: Option<String>,
    },
    /// Print the version and build id.
    Version,
}

fn oracle_table(reports: &[OracleReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  {:>10}  {:>10}  {:>8}  result\n", "check", "abs err", "rel err", "tol");
    for r in reports {
        out.push_str(&format!(
            "{:<width$}  {:>10.3e}  {:>10.3e}  {:>8.0e}  {}\n",
            r.name,
            r.abs_err,
            r.rel_err,
            r.tolerance,
            if r.passed { "ok" } else { "FAILED" }
        ));
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    out.push_str(&format!("{} checks, {failed} failed\n", reports.len()));
    out
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, threads, out, force, quiet } => {
            let file = load_any(&config)?;
            let root = out.or_else(|| std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from));
            let dir = run(&file, &RunOptions { root, threads, force, quiet })?;
            println!("{}", dir.display());
        }
        Command::OracleCheck { json, inject_fault } => {
            let reports = run_oracle_suite(inject_fault.then_some(Fault::FlipBaselineSign))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&reports)?);
            } else {
                print!("{}", oracle_table(&reports));
            }
            if reports.iter().any(|r| !r.passed) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Plot { csv, kind, metric, output } => {
            let table = Table::read(&csv)?;
            let svg = render(kind, &table, &metric).with_context(|| format!("plotting {}", csv.display()))?;
            write_atomic(&output, svg.as_bytes())?;
        }
        Command::DumpMap { config } => {
            let env = match config {
                Some(c) => match load_any(&c)?.problem {
                    ProblemSpec::KhazadDum { env, .. } => env,
                    ProblemSpec::Sine { .. } => anyhow::bail!("{c} is not a Khazad Dum run file"),
                },
                None => KhazadDumConfig::default(),
            };
            print!("{}", KhazadDum::new(env)?.ascii_map());
        }
        Command::Version => println!("roml {} ({BUILD_ID})", env!("CARGO_PKG_VERSION")),
    }
    Ok(ExitCode::SUCCESS)
}
