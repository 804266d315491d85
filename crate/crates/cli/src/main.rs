//! `carnot`: experiment driver for random walks on Carnot groups.
//!
//! Settings come from an optional JSON config; `--seed`, `--out` and
//! `--group` override the corresponding config fields. The worker count
//! comes from `--threads`, else `CARNOT_THREADS`, else all cores.

mod commands;
mod config;
mod error;
mod output;

use clap::{Parser, Subcommand};
use config::{parse_config, resolve, ExperimentConfig};
use error::CliError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "carnot",
    version,
    about = "Random walks, rate functions and large-deviation checks on Carnot groups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "CARNOT_THREADS")]
    threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Group spec (overrides the config).
    #[arg(long, global = true)]
    group: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Layers, homogeneity and structural checks of the group.
    GroupInfo,
    /// Sample walks and their rescaled endpoints.
    Walk,
    /// Minimize the discrete rate functional at a target.
    Rate,
    /// Monte Carlo decay slope of a rare event.
    McSlope,
    /// Tail of the block-approximation gap.
    ApproxStudy,
    /// Window norms, sub-exponential sums and symplectic-form MGFs.
    Diag,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        carnot_core::par::set_thread_count(t)?;
    }
    let (config, base) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (parse_config(&text)?, base)
        }
        None => (ExperimentConfig::default(), PathBuf::from(".")),
    };
    let out_given = cli.out.is_some() || config.out.is_some();
    let res = resolve(config, &base, cli.seed, cli.out, cli.group)?;
    match cli.command {
        Command::GroupInfo => commands::group_info(&res, out_given),
        Command::Walk => commands::walk(&res),
        Command::Rate => commands::rate(&res),
        Command::McSlope => commands::mc_slope(&res),
        Command::ApproxStudy => commands::approx_study(&res),
        Command::Diag => commands::diag(&res),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
