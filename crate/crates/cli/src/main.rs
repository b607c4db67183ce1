use std::path::PathBuf;
use std::process::ExitCode;

use boed_cli::commands::parse_steps;
use boed_cli::{apply_thread_limit, cmd_compare, cmd_replay, cmd_run, CliError, CliResult, ReplayKind, ReplayOptions};
use boed_core::ExecMode;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "boed", version, about = "Sequential Bayesian experimental design with flow posteriors")]
struct Cli {
    /// Run batches on one thread instead of the worker pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign per seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every strategy for every seed and compare them.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a run log into CSV plot data.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum)]
        what: What,
        /// Comma-separated steps, or `all`.
        #[arg(long)]
        steps: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Posterior draws per step for response bands.
        #[arg(long, default_value_t = 64)]
        samples: usize,
        /// Histogram bins per dimension.
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    EigHeatmap,
    PosteriorEvolution,
    ResponseBand,
    Corner,
}

fn execute(cli: Cli) -> CliResult<()> {
    apply_thread_limit()?;
    let exec = if cli.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    match cli.command {
        Command::Run { config, out } => {
            for dir in cmd_run(&config, out.as_deref(), exec)? {
                println!("{}", dir.display());
            }
        }
        Command::Compare { config, out } => {
            let summary = cmd_compare(&config, out.as_deref(), exec)?;
            for s in &summary.strategies {
                println!(
                    "{}: final cumulative IG {:.4} ± {:.4}",
                    s.strategy, s.final_cumulative_ig.mean, s.final_cumulative_ig.stderr
                );
            }
        }
        Command::Replay { log, what, steps, out, samples, bins } => {
            let kind = match what {
                What::EigHeatmap => ReplayKind::EigHeatmap,
                What::PosteriorEvolution => ReplayKind::PosteriorEvolution,
                What::ResponseBand => ReplayKind::ResponseBand,
                What::Corner => ReplayKind::Corner,
            };
            let steps = match steps {
                Some(text) => parse_steps(&text).map_err(CliError::Config)?,
                None => None,
            };
            let opts = ReplayOptions { kind, steps, out, samples, bins };
            for f in cmd_replay(&log, &opts, exec)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("boed: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
