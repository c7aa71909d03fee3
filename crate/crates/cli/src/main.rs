use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use shoulder_core::fixture;
use shoulder_core::pipeline::{self, RunConfig, Stage, CONFIG_KEYS};

fn config_help() -> String {
    let mut s = String::from("Config file keys (flat `key = value`, `#` comments, paths relative to the file):\n");
    for (k, doc) in CONFIG_KEYS {
        s.push_str(&format!("  {k:<22} {doc}\n"));
    }
    s
}

/// Shoulder-season analysis of electricity load and temperature records.
#[derive(Debug, Parser)]
#[command(name = "shoulder", version, after_long_help = config_help())]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory, overriding `output_dir` from the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for synthetic fixture generation.
    #[arg(long, global = true, default_value_t = fixture::DEFAULT_SEED)]
    seed: u64,

    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate load, fuel-mix and outage files; write daily summaries.
    Ingest,
    /// Regional temperature, demand/temperature cubics, T0 and degree days.
    Thermal,
    /// Minimum-mean 45-day windows per year, half and metric.
    Shoulder,
    /// Onset drift, shift probabilities and correlations.
    Trends,
    /// Ensemble bias correction, projected onsets and merge year.
    Project,
    /// Outage averages, unmet-demand fractions and generation histograms.
    Adequacy,
    /// Text digest of every result in the output directory.
    Report,
    /// Every stage in order, then the report.
    All,
    /// Write a seeded synthetic input set and config into --out.
    Fixture,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Ingest => Stage::Ingest,
            Command::Thermal => Stage::Thermal,
            Command::Shoulder => Stage::Shoulder,
            Command::Trends => Stage::Trends,
            Command::Project => Stage::Project,
            Command::Adequacy => Stage::Adequacy,
            Command::Report => Stage::Report,
            Command::All | Command::Fixture => return None,
        })
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Fixture = cli.command {
        let dir = cli.out.context("`fixture` needs --out <DIR>")?;
        let f = fixture::generate(&dir, cli.seed)?;
        println!("wrote fixture to {} (config: {})", f.dir.display(), f.config.display());
        return Ok(());
    }

    let path = cli.config.context("--config <PATH> is required")?;
    let mut cfg = RunConfig::from_file(&path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    let summary = match cli.command.stage() {
        Some(stage) => pipeline::run_pipeline(&cfg, &[stage])?,
        None => pipeline::run_all(&cfg)?,
    };
    for (stage, why) in &summary.skipped {
        eprintln!("skipped {stage}: {why}");
    }
    match &summary.report {
        Some(report) => print!("{report}"),
        None => {
            let ran: Vec<&str> = summary.stages_run.iter().map(|s| s.as_str()).collect();
            println!("ran {} into {}", ran.join(", "), cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
