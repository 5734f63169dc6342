use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use invbench_cli::commands::{self, EvalOptions, PlotOptions, Run, TrainOptions};
use invbench_cli::{exit_code, RunConfig};

#[derive(Parser)]
#[command(name = "invbench", version, about = "Benchmark invertible architectures on inverse problems")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Restrict to these problems (kinematics, ballistics).
    #[arg(long = "problem", global = true, value_delimiter = ',')]
    problems: Vec<String>,
    /// Restrict to these model ids.
    #[arg(long = "model", global = true, value_delimiter = ',')]
    models: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write training data and oracle posteriors.
    Generate,
    /// Train models, resuming from checkpoints.
    Train {
        /// Stop after this many epochs; rerun to resume.
        #[arg(long)]
        stop_after: Option<usize>,
        /// Discard existing checkpoints.
        #[arg(long)]
        fresh: bool,
    },
    /// Score trained models against the oracle.
    Eval {
        /// Skip the wall-clock timing run.
        #[arg(long)]
        no_timing: bool,
    },
    /// Aggregate evaluation records into tables.
    Report,
    /// Write the data behind the posterior figures.
    Plotdata {
        /// Observation to condition on, e.g. `1.5,0`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        target: Option<Vec<f64>>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let c = cli.common;
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = c.out {
        cfg.output_dir = out;
    }
    let run = Run::new(cfg, &c.problems, &c.models)?;
    match cli.command {
        Command::Generate => commands::generate(&run),
        Command::Train { stop_after, fresh } => commands::train(&run, &TrainOptions { stop_after, fresh }),
        Command::Eval { no_timing } => commands::eval(&run, &EvalOptions { timing: !no_timing }),
        Command::Report => commands::report(&run),
        Command::Plotdata { target } => commands::plotdata(&run, &PlotOptions { target }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
