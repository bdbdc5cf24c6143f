//! `rstar`: fit, test, profile, simulate and verify from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rstar_core::{Error, ModelSpec};

#[derive(Parser)]
#[command(name = "rstar", version, about = "Likelihood root and modified likelihood root inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximum likelihood fit.
    Fit(DataArgs),
    /// r and r* for H0: psi = psi0, with confidence intervals.
    Test {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        psi0: f64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Profile log-likelihood grid around the estimate.
    Profile {
        #[command(flatten)]
        data: DataArgs,
        /// Grid half-width in points.
        #[arg(long, default_value_t = 4)]
        radius: usize,
        /// Grid spacing; defaults to half a pilot standard error.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Monte Carlo study of the r* residual.
    Simulate {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        boot: Option<usize>,
        /// Plot-data CSV; defaults to `<output stem>.plot.csv`.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Expansion diagnostics along one nested sequence of datasets.
    Verify {
        #[command(flatten)]
        study: StudyArgs,
    },
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Response column.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// logistic, locscale-normal, locscale-t:<df>, locscale-logistic or normal-known:<sigma>.
    #[arg(long, default_value = "logistic")]
    pub family: ModelSpec,
    /// Interest coefficient, by column name or design-matrix index.
    #[arg(long)]
    pub interest: Option<String>,
    /// Prepend a column of ones.
    #[arg(long)]
    pub intercept: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Clone)]
pub struct StudyArgs {
    /// TOML configuration.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Clone)]
pub struct OutArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Bernoulli-logistic, beta = (0, 1, 1, 1, 1), intercept 1.
    Logistic,
    /// The same design with t5 location-scale errors.
    T5,
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Config(String),
    Data(String),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e.root() {
                Error::Config(_) | Error::InvalidParameter(_) => 2,
                Error::InvalidData(_) => 3,
                Error::Convergence { .. } | Error::Divergence { .. } => 4,
                _ => 5,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(data) => commands::fit(&data),
        Command::Test { data, psi0, level } => commands::test(&data, psi0, level),
        Command::Profile { data, radius, step } => commands::profile(&data, radius, step),
        Command::Simulate {
            study,
            reps,
            boot,
            plot,
        } => commands::simulate(&study, reps, boot, plot),
        Command::Verify { study } => commands::verify(&study),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rstar: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
