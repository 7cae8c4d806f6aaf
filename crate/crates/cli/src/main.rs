mod config;
mod error;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde::Serialize;

use config::{Command, Overrides, SweepPoint};
use error::CliError;

/// Bayesian routing games: equilibria, information design and the
/// two-link optimality conditions.
#[derive(Debug, Parser)]
#[command(name = "infodesign", version)]
struct Cli {
    command: Command,
    /// Per-point command of a sweep.
    point: Option<SweepPoint>,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Midpoint grid size for uniform priors.
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Projected-gradient tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Serialize)]
struct Metadata {
    version: &'static str,
    command: Command,
    config_path: PathBuf,
    output_dir: PathBuf,
    threads: usize,
    started_unix_seconds: u64,
    elapsed_seconds: f64,
}

const THREADS_VAR: &str = "INFODESIGN_THREADS";

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads = raw
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot start {threads} threads: {e}")))
}

fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    configure_threads()?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let clock = Instant::now();

    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        grid_n: cli.grid_n,
        restarts: cli.restarts,
        tol: cli.tol,
        point: cli.point,
    };
    let config = config::load(&cli.config, cli.command, &overrides)?;
    let output = config.output.clone();
    let (report, table) = run::run(config)?;

    output::create_dir(&output.dir)?;
    let result_path = output.dir.join("result.json");
    output::write_file(&result_path, &output::to_json(&report))?;
    if let (Some(table), true) = (table, output.plot) {
        output::write_file(&output.dir.join("plot.csv"), &table.to_csv())?;
    }
    let metadata = Metadata {
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command,
        config_path: cli.config,
        output_dir: output.dir.clone(),
        threads: rayon::current_num_threads(),
        started_unix_seconds: started,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
    };
    output::write_file(&output.dir.join("metadata.json"), &output::to_json(&metadata))?;
    Ok(result_path)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{report}");
            ExitCode::from(e.exit_code())
        }
    }
}
