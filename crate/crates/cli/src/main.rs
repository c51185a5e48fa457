//! `photonq`: counting statistics of a single photon scattered by a small
//! quantum system in a bidirectional waveguide.
//!
//! Exit codes: 0 when every internal cross-check passes, 1 on invalid input
//! or a failed computation, 2 when a cross-check exceeds its tolerance.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::{CommandOutput, Overrides};

#[derive(Parser)]
#[command(name = "photonq", version, about = "Photon counting statistics for waveguide scattering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for Monte Carlo sampling; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cross-check tolerance; overrides the configuration and the command default.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Probability of no count versus time, closed form against quadrature.
    Pzero,
    /// Exclusive one- and two-count densities on the grid.
    Densities,
    /// Pattern probabilities and mean counts versus time.
    Events,
    /// Mean times of the first and second counts and the photon delay.
    Times,
    /// Discrete-to-continuous convergence of a conditional pair.
    Converge,
    /// Monte Carlo estimates of the pattern probabilities and mean times.
    Sample,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Pzero => "pzero",
            Command::Densities => "densities",
            Command::Events => "events",
            Command::Times => "times",
            Command::Converge => "converge",
            Command::Sample => "sample",
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("PHOTONQ_THREADS") {
        let n: usize = raw.trim().parse().with_context(|| format!("PHOTONQ_THREADS must be a positive integer, got {raw:?}"))?;
        anyhow::ensure!(n > 0, "PHOTONQ_THREADS must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<CommandOutput> {
    configure_threads()?;
    let path = cli.config.as_ref().context("missing --config <path>")?;
    let resolved = config::load(path, cli.command.name())?;
    let o = Overrides {
        seed: cli.seed,
        tol: cli.tol,
    };
    let output = match cli.command {
        Command::Pzero => commands::pzero(&resolved, o),
        Command::Densities => commands::densities(&resolved, o),
        Command::Events => commands::events(&resolved, o),
        Command::Times => commands::times(&resolved, o),
        Command::Converge => commands::converge(&resolved, o),
        Command::Sample => commands::sample(&resolved, o),
    }?;
    match &cli.out {
        Some(p) => std::fs::write(p, &output.body).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(&output.body)?,
    }
    Ok(output)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(out) => {
            let failed: Vec<_> = out.checks.iter().filter(|c| !c.pass).collect();
            for c in &failed {
                eprintln!("check failed: {}: {}", c.name, c.detail);
            }
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
