//! `oce`: solve, simulate and validate risk-sensitive control problems from a
//! JSON run configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Parser, ValueEnum};
use serde_json::json;

use config::{ConfigError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Check the standing assumptions on the configured loss.
    CheckLoss,
    /// OCE of the configured empirical distribution.
    Oce,
    /// Risk-free HJB on (t, y).
    SolveFree,
    /// HJBI on the enlarged state (t, y, z).
    Solve,
    /// Forward paths under the optimal or a constant policy.
    Simulate,
    /// Structural and oracle checks on a solved field.
    Validate,
    /// Adversary-bound scan with its monotonicity table.
    Sweep,
}

#[derive(Debug, Parser)]
#[command(name = "oce", version, about = "Optimized certainty equivalent control solvers")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "OCE_WORKERS")]
    workers: Option<usize>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the simulated path count.
    #[arg(long)]
    paths: Option<usize>,
    /// Overrides the number of simulation steps.
    #[arg(long)]
    steps: Option<usize>,
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = cli.paths {
        cfg.simulate.paths = p;
        cfg.validate.paths = p;
    }
    if let Some(s) = cli.steps {
        cfg.simulate.steps = s;
        cfg.validate.steps = s;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("oce-out"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let workers = match cli.workers {
        Some(0) => return Err(config::config_error("workers: must be at least 1")),
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
            n
        }
        None => rayon::current_num_threads(),
    };

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let outcome = match cli.command {
        Command::CheckLoss => commands::check_loss(&cfg, &out),
        Command::Oce => commands::oce(&cfg, &out),
        Command::SolveFree => commands::solve_free(&cfg, &out),
        Command::Solve => commands::solve(&cfg, &out),
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::Validate => commands::validate(&cfg, &out),
        Command::Sweep => commands::sweep(&cfg, &out),
    }?;
    let command = cli.command.to_possible_value().expect("named subcommand").get_name().to_string();
    let manifest = json!({
        "subcommand": command,
        "config": cfg,
        "versions": { "oce-cli": env!("CARGO_PKG_VERSION"), "oce-control": oce_control::VERSION },
        "workers": workers,
        "started_unix": started,
        "wall_seconds": clock.elapsed().as_secs_f64(),
        "cfl_substeps": outcome.substeps,
        "passed": outcome.passed,
    });
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) if e.is::<ConfigError>() => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
