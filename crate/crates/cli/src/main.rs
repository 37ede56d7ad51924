use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deepalloc_cli::{run, Command, FlagOverrides, RunConfig};

#[derive(Parser)]
#[command(name = "deepalloc", version, about = "Train, backtest and compare portfolio allocation strategies")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration.
    #[arg(long, global = true, default_value = "deepalloc.toml")]
    config: PathBuf,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated strategies, replacing the configured list.
    #[arg(long, global = true)]
    strategies: Option<String>,

    /// Proportional cost in basis points, replacing `cost_rate`.
    #[arg(long = "cost-bps", global = true)]
    cost_bps: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Validate the dataset and cache it in canonical form.
    Ingest,
    /// Train the selected policy networks and write checkpoints plus a manifest.
    Train,
    /// Backtest a single strategy on the test segment.
    Backtest,
    /// Backtest every selected strategy and write the comparison table.
    Compare,
    /// Turn stored results into plot-ready CSV series.
    Report,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Ingest => Command::Ingest,
            Cmd::Train => Command::Train,
            Cmd::Backtest => Command::Backtest,
            Cmd::Compare => Command::Compare,
            Cmd::Report => Command::Report,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let flags = FlagOverrides { seed: cli.seed, out: cli.out, strategies: cli.strategies, cost_bps: cli.cost_bps };
    let outcome = RunConfig::read(&cli.config).and_then(|mut cfg| {
        cfg.apply(&flags)?;
        run(cli.command.into(), cfg)
    });
    match outcome {
        Ok(report) => {
            if let Some(table) = report.table {
                print!("{table}");
            }
            for f in &report.files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
