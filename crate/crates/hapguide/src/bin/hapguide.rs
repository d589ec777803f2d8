use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hapguide::app;
use hapguide::config::SessionConfig;
use hapguide_core::devices::Device;
use hapguide_core::RngSeed;

#[derive(Parser)]
#[command(name = "hapguide", version, about = "Simulate and analyse haptic postural guidance sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run simulated sessions and write logs, metrics, summaries and comparisons.
    Simulate {
        /// Session configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the configured one).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a recorded joint-angle file through a device's feedback laws.
    Replay {
        /// Motion file: t_seconds,shoulder_deg,knee_deg.
        #[arg(long)]
        input: PathBuf,
        /// Device whose cues to compute.
        #[arg(long, value_parser = parse_device)]
        device: Device,
        /// Target as joint=degrees; repeat for two joints.
        #[arg(long = "target", required = true)]
        targets: Vec<String>,
        /// Session configuration for device parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "replay_out")]
        out: PathBuf,
    },
    /// Recompute metric tables from trial logs.
    Metrics {
        /// A trial log file or a directory of them.
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the paired comparisons on a metrics table.
    Compare {
        /// metrics.csv
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Draw one boxplot per index from a metrics table.
    Report {
        /// metrics.csv
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

fn parse_device(s: &str) -> Result<Device, String> {
    s.parse().map_err(|_| format!("unknown device `{s}`; expected ergotac or cuff"))
}

fn load_config(path: Option<&PathBuf>) -> Result<SessionConfig> {
    match path {
        Some(p) => Ok(SessionConfig::load(p)?),
        None => Ok(SessionConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(s) = seed {
                cfg.seed = RngSeed(s);
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let result = app::simulate(&cfg, &out)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} trials written to {}", result.logs.len(), out.display());
        }
        Command::Replay { input, device, targets, config, out } => {
            let cfg = load_config(config.as_ref())?;
            let targets = app::parse_targets(&targets)?;
            let r = app::replay(&input, device, targets, &cfg.device, &out)?;
            println!(
                "{} samples, success {}, confusion {}%",
                r.log.samples.len(),
                r.record.metrics.success,
                r.record.metrics.confusion_index
            );
        }
        Command::Metrics { input, out } => {
            let records = app::metrics(&input, &out)?;
            println!("{} trials", records.len());
        }
        Command::Compare { input, out } => {
            let rows = app::compare(&input, &out)?;
            println!("{} comparisons", rows.len());
        }
        Command::Report { input, out } => {
            let files = app::report(&input, &out).context("report")?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
