//! `msntf` command-line pipeline: ingest or synthesize a user × day × week
//! tensor, scan ranks, fit, cluster users and characterize the clusters.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::artifacts::Workspace;
use crate::config::PipelineConfig;

#[derive(Parser)]
#[command(name = "msntf", version, about = "Weekly behavior patterns from event logs via non-negative PARAFAC")]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set cluster.k=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (default: config, then $MSNTF_OUT_DIR, then ./msntf-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the tensor from a receipts CSV.
    Ingest,
    /// Generate a synthetic tensor with planted patterns and demographics.
    Synth,
    /// Fit at `fit.rank`, keeping the best of `n_runs` restarts.
    Fit,
    /// Core-consistency scan over `scan.ranks`.
    CcScan,
    /// Cluster users by their membership shares.
    Cluster,
    /// Chi-squared tests, representative groups and their overlap.
    Stats,
    /// Bundle the plot-ready tables with a manifest.
    Report,
    /// Every stage in order.
    Run,
    /// Print the effective configuration.
    ShowConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Command::ShowConfig = cli.command {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let ws = Workspace::create(cfg.resolve_out_dir(cli.out.as_deref()))?;
    match cli.command {
        Command::Ingest => commands::ingest(&cfg, &ws).map(drop),
        Command::Synth => commands::synth(&cfg, &ws).map(drop),
        Command::Fit => commands::fit(&cfg, &ws, cfg.fit.rank).map(drop),
        Command::CcScan => commands::cc_scan_cmd(&cfg, &ws).map(drop),
        Command::Cluster => commands::cluster(&cfg, &ws).map(drop),
        Command::Stats => commands::stats(&cfg, &ws).map(drop),
        Command::Report => commands::report(&cfg, &ws).map(drop),
        Command::Run => commands::run(&cfg, &ws),
        Command::ShowConfig => unreachable!(),
    }
}
