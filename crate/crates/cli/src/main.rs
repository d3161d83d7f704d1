//! `cgholo run <config> --out <dir>`: runs the jobs of a configuration and
//! writes `report.json`, sample CSVs and optional SVG plots.
//!
//! Exit codes: 0 when every claim passes, 1 when a claim fails, 2 on a
//! configuration or runtime error.

mod config;
mod jobs;
mod plot;
mod report;
mod setup;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{Config, ConfigError};
use jobs::RunOptions;
use report::JobOutcome;
use setup::Setup;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] cgholo::Error),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Parser)]
#[command(name = "cgholo", version, about = "Conformal geodesics and asymptotic harmonic maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every job in a configuration file.
    Run {
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Also write SVG plots under <out>/plots.
        #[arg(long)]
        plots: bool,
        /// Deepest ladder rung k (s = 2^-k) for verify jobs.
        #[arg(long, value_name = "K")]
        ladder_depth: Option<i32>,
        /// Seed for randomly drawn sample points.
        #[arg(long, value_name = "N", default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        config,
        out,
        plots,
        ladder_depth,
        seed,
    } = cli.command;
    let opts = RunOptions {
        plots,
        ladder_depth,
        seed,
    };
    match run(&config, &out, &opts) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("cgholo: {}: {msg}", config.display());
            ExitCode::from(2)
        }
    }
}

/// Runs all jobs; `Ok(pass)` reports whether every claim held.
fn run(path: &Path, out: &Path, opts: &RunOptions) -> Result<bool, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("reading config: {e}")))?;
    let cfg = Config::parse(&text)?;
    let setup = Setup::build(&cfg)?;
    if let Some(d) = opts.ladder_depth {
        if !(5..=40).contains(&d) {
            return Err(RunError::Io(format!("--ladder-depth {d} outside 5..=40")));
        }
    }
    let outcomes: Vec<Result<JobOutcome, RunError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .jobs
            .iter()
            .map(|job| scope.spawn(|| jobs::run_job(job, &setup, opts)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("job thread panicked")).collect()
    });
    let mut done = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    done.sort_by(|a, b| a.name.cmp(&b.name));

    let io = |e: std::io::Error| RunError::Io(e.to_string());
    std::fs::create_dir_all(out).map_err(io)?;
    let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    std::fs::write(out.join("report.json"), report::render(&name, &done)).map_err(io)?;
    let single = done.len() == 1;
    for j in &done {
        let file = if single {
            "samples.csv".to_string()
        } else {
            format!("samples_{}.csv", j.name)
        };
        std::fs::write(out.join(file), &j.csv).map_err(io)?;
        if opts.plots && !j.plots.is_empty() {
            let dir = out.join("plots");
            std::fs::create_dir_all(&dir).map_err(io)?;
            for (stem, svg) in &j.plots {
                std::fs::write(dir.join(format!("{stem}.svg")), svg).map_err(io)?;
            }
        }
    }
    Ok(done.iter().all(JobOutcome::pass))
}
