use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use commands::Failure;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "fibertwin", version, about = "Fiber parameter estimation with a physics-informed digital twin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides both the training and the dataset seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the input/reference dataset.
    Simulate(Common),
    /// Train the twin and write history and summary.
    Train(Common),
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        quadratic: bool,
        #[arg(long, hide = true)]
        corrupt_adjoint: bool,
    },
    /// Multiplication counts for the configured twin.
    Complexity(Common),
    /// Print the summary of a finished run, or run an SNR sweep.
    Report {
        #[command(flatten)]
        common: Common,
        /// Train at each SNR in dB and tabulate the errors.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        sweep: Option<Vec<f64>>,
    },
}

fn resolve(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref()).map_err(|e| Failure::Config(e.0))?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.output.directory = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(&resolve(&c)?, c.force),
        Command::Train(c) => commands::train(&resolve(&c)?, c.force),
        Command::Gradcheck {
            common,
            quadratic,
            corrupt_adjoint,
        } => commands::gradcheck(&resolve(&common)?, common.force, quadratic, corrupt_adjoint),
        Command::Complexity(c) => commands::complexity(&resolve(&c)?, c.force),
        Command::Report { common, sweep } => commands::report(&resolve(&common)?, common.force, sweep),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
