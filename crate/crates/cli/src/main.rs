use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfk_cli::{CliError, Probes, Reporter, RunConfig};

#[derive(Parser)]
#[command(
    name = "mfk",
    version,
    about = "Multi-fidelity co-kriging and sequential design"
)]
struct Cli {
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write its files plus a fit report.
    Fit(RunArgs),
    /// Predict from a saved model at listed points or on a grid.
    Predict {
        /// Directory written by `fit` (or `model/` under a sequential run).
        #[arg(long)]
        model: PathBuf,
        /// CSV of points with header dim_0,…
        #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
        points: Option<PathBuf>,
        /// Nodes per axis of a regular grid over the model's input box.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the sequential design loop.
    Sequential(RunArgs),
    /// Derive plot-ready tables from a trace.
    Report {
        /// Trace CSV written by `sequential`.
        #[arg(long)]
        trace: PathBuf,
        /// Config of the run, to check the cost column against its costs.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let log = Reporter { quiet: cli.quiet };
    match cli.command {
        Command::Fit(args) => mfk_cli::cmd_fit(&load(&args)?, &args.out, log),
        Command::Predict {
            model,
            points,
            grid,
            out,
        } => {
            let probes = match (points, grid) {
                (Some(p), _) => Probes::Points(p),
                (None, Some(n)) => Probes::Grid(n),
                (None, None) => unreachable!("clap requires --points or --grid"),
            };
            mfk_cli::cmd_predict(&model, &probes, &out, log)
        }
        Command::Sequential(args) => mfk_cli::cmd_sequential(&load(&args)?, &args.out, log),
        Command::Report { trace, config, out } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            mfk_cli::cmd_report(&trace, cfg.as_ref(), &out, log)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the configuration exit code
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mfk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
