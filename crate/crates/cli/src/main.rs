//! `chartjepa`: simulate data, run both training stages, evaluate and predict.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

use commands::{CliError, Run, TrainStart};
use config::{extract_overrides, RunConfig};

/// Every `section.key` of the configuration can also be given as
/// `--section.key VALUE`; later sources win over earlier ones
/// (built-in desk defaults, then `--config`, then flags).
#[derive(Debug, Parser)]
#[command(name = "chartjepa", version, about, after_help = "Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Same as --paths.dataset.
    #[arg(long, global = true, value_name = "FILE")]
    dataset: Option<String>,
    /// Same as --paths.checkpoint.
    #[arg(long, global = true, value_name = "FILE")]
    checkpoint: Option<String>,
    /// Same as --paths.out.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// Suppress the stdout summary.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a dataset file and its manifest.
    Simulate,
    /// Stage 1 only: siamese charting on a dissimilarity matrix.
    Pretrain {
        /// `adp` or `geodesic`; same as --pretrain.mode.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Stage 1 (unless skipped) followed by JEPA training.
    Train {
        /// Skip stage 1 and start JEPA from a random encoder.
        #[arg(long, conflicts_with = "init")]
        from_scratch: bool,
        /// Start JEPA from this checkpoint; same as --paths.init.
        #[arg(long, value_name = "FILE")]
        init: Option<String>,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Chart metrics, downstream accuracy sweep and embedding export.
    Evaluate {
        /// Comma-separated; same as --eval.horizons.
        #[arg(long)]
        horizons: Option<String>,
        /// Comma-separated rad/s, `pi/65` style allowed; same as --eval.biases.
        #[arg(long)]
        biases: Option<String>,
    },
    /// Predicted chart trajectory from one sample and its recorded velocities.
    Predict {
        /// Global sample index of the context slot.
        #[arg(long)]
        start: usize,
        /// Steps to roll; defaults to train.horizon.
        #[arg(long)]
        horizon: Option<usize>,
    },
}

fn aliases(cli: &Cli) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut push = |k: &str, v: &Option<String>| {
        if let Some(v) = v {
            out.push((k.to_string(), v.clone()));
        }
    };
    push("paths.dataset", &cli.dataset);
    push("paths.checkpoint", &cli.checkpoint);
    push("paths.out", &cli.out);
    match &cli.command {
        Command::Pretrain { mode } => push("pretrain.mode", mode),
        Command::Train { init, mode, .. } => {
            push("paths.init", init);
            push("pretrain.mode", mode);
        }
        Command::Evaluate { horizons, biases } => {
            push("eval.horizons", horizons);
            push("eval.biases", biases);
        }
        Command::Simulate | Command::Predict { .. } => {}
    }
    out
}

fn run(cli: &Cli, overrides: &[(String, String)]) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), overrides)?;
    cfg.apply(&aliases(cli))?;
    cfg.validate()?;
    let run = Run::new(cfg);
    match &cli.command {
        Command::Simulate => run.simulate(),
        Command::Pretrain { .. } => run.pretrain(),
        Command::Train { from_scratch, .. } => {
            let start = if *from_scratch {
                TrainStart::Scratch
            } else if run.cfg.path("paths.init").is_some() {
                TrainStart::Init
            } else {
                TrainStart::Pretrain
            };
            run.train(start)
        }
        Command::Evaluate { .. } => run.evaluate(),
        Command::Predict { start, horizon } => run.predict(*start, *horizon),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let (overrides, rest) = match extract_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(&cli, &overrides) {
        Ok(summary) => {
            if !cli.quiet {
                print!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
