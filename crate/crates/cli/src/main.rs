use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dpopnet_cli::{cmd_lp, cmd_repro, cmd_run, cmd_sweep, CliError, Overrides};
use dpopnet_core::simulate;

#[derive(Parser)]
#[command(
    name = "dpopnet",
    version,
    about = "Multi-commodity queueing-network experiments with learned edge costs"
)]
struct Cli {
    /// Worker threads for replications (falls back to DPOPNET_THREADS, then
    /// to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicate one experiment and emit trace.csv + summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long)]
        base_seed: Option<u64>,
    },
    /// Replication campaigns over the (T, sigma) grid in the config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long)]
        base_seed: Option<u64>,
    },
    /// Solve the static min-cost flow LP for a network file or builtin name.
    Lp {
        /// Path to a network JSON file, or a builtin topology name.
        network: String,
    },
    /// Canned desk-scale campaign for one figure:
    /// cost_curve | backlog_curve | utilization | regret_sweep.
    Repro {
        figure: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long)]
        base_seed: Option<u64>,
    },
}

fn threads_from_env() -> Option<usize> {
    std::env::var("DPOPNET_THREADS").ok()?.parse().ok()
}

fn run(cli: Cli) -> Result<(), CliError> {
    simulate::configure_threads(cli.threads.or_else(threads_from_env));

    match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            base_seed,
        } => {
            cmd_run(&config, &Overrides { out, seeds, base_seed })?;
        }
        Command::Sweep {
            config,
            out,
            seeds,
            base_seed,
        } => {
            cmd_sweep(&config, &Overrides { out, seeds, base_seed })?;
        }
        Command::Lp { network } => {
            cmd_lp(&network)?;
        }
        Command::Repro {
            figure,
            out,
            seeds,
            base_seed,
        } => {
            cmd_repro(&figure, &Overrides { out, seeds, base_seed })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}
