//! `chaosfb`: run the feedback loop, estimate the decoupling factor and
//! evaluate memory fidelity from the command line.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 configuration or usage
//! error, 3 numerical divergence.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use chaosfb_core::dynamics::{DynamicsError, OdeError};
use chaosfb_core::memory::MemoryError;
use chaosfb_core::pipeline::PipelineError;
use chaosfb_core::spectral::SpectralError;
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Divergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Divergence { .. } | DynamicsError::Ode(OdeError::NonFinite { .. }) => {
                CliError::Divergence(e.to_string())
            }
            DynamicsError::Ode(_) | DynamicsError::Network(_) => CliError::Other(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::ZeroSpectrum => CliError::Other(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Dynamics(e) => e.into(),
            PipelineError::Spectral(e) => e.into(),
        }
    }
}

impl From<MemoryError> for CliError {
    fn from(e: MemoryError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "chaosfb", version, about)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads for grid evaluations.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Force fixed-step RK4 with this step (µs).
    #[arg(long, global = true, value_name = "DT_US")]
    fixed_step: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the loop; writes trajectory.csv and summary.json into --out.
    Simulate,
    /// Decoupling factor of the control signal, from a run or a CSV signal.
    Decouple {
        /// CSV with header `t_us,f_rad_per_us` on a uniform grid.
        #[arg(long, value_name = "CSV")]
        signal: Option<PathBuf>,
    },
    /// Memory fidelity for a single parameter set.
    Fidelity {
        #[arg(long)]
        nu_hz: f64,
        #[arg(long)]
        gamma1_hz: f64,
        #[arg(long)]
        n: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        s: f64,
        /// Decoupling factor applied to Γ₁.
        #[arg(long)]
        m: Option<f64>,
    },
    /// Fidelity over the grids of the `memory` block; CSV to --out or stdout.
    Sweep,
    /// Regenerate a figure bundle into --out.
    Repro {
        #[arg(value_enum)]
        figure: Figure,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig4,
    Fig7,
    Fig8,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    if let Some(dt) = cli.fixed_step {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Config("--fixed-step must be positive".into()));
        }
    }
    let cfg = match &cli.config {
        Some(path) => Some(config::load(path)?),
        None => None,
    };
    let ctx = commands::Context {
        config: cfg,
        out: cli.out,
        fixed_step: cli.fixed_step,
    };
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Decouple { signal } => commands::decouple(&ctx, signal.as_deref()),
        Command::Fidelity {
            nu_hz,
            gamma1_hz,
            n,
            s,
            m,
        } => commands::fidelity(&ctx, nu_hz, gamma1_hz, n, s, m),
        Command::Sweep => commands::sweep(&ctx),
        Command::Repro { figure } => commands::repro(&ctx, figure),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chaosfb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
