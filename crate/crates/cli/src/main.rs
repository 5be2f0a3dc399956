mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Recovery of structured signals from quadratic measurements.
#[derive(Debug, Parser)]
#[command(name = "quadrec", version, about)]
struct Cli {
    /// Run configuration (TOML); defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed, overriding `problem.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for trials (default: logical cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    /// Start PGD from the projected power estimate.
    Ppower,
    /// Start PGD from the projected flat vector.
    Flat,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a truth and its measurements: truth.csv, y.csv, ensemble.json.
    Simulate,
    /// Recover the signal from simulated or supplied data.
    Solve {
        /// Directory holding y.csv and ensemble.json (default: the output directory).
        #[arg(long, value_name = "DIR")]
        input: Option<PathBuf>,
        /// Initialization of PGD for a generative prior.
        #[arg(long, value_enum)]
        init: Option<Init>,
    },
    /// Success-rate grid over experiment.k_values x experiment.m_values.
    Grid {
        /// Continue a partially completed grid in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after computing this many new cells.
        #[arg(long, value_name = "N")]
        stop_after: Option<usize>,
    },
    /// Distance quartiles over experiment.m_values (spectral initializers for
    /// a sparse prior, cosine similarity of each algorithm otherwise).
    Sweep,
    /// Run the concentration and expectation checks; JSON on stdout.
    Verify {
        /// Multiply every check bound by this factor.
        #[arg(long, default_value_t = 1.0, value_name = "F")]
        bound_scale: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let ctx = match commands::Context::new(cli.config.as_deref(), cli.seed, cli.out, cli.workers) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Solve { input, init } => commands::solve(&ctx, input, init),
        Command::Grid { resume, stop_after } => commands::grid(&ctx, resume, stop_after),
        Command::Sweep => commands::sweep(&ctx),
        Command::Verify { bound_scale } => commands::verify(&ctx, bound_scale),
    };
    match result {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Failure) => ExitCode::from(1),
        Err(commands::CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(commands::CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
