//! Command-line front end: scenario configs in, deterministic reports and
//! CSV out. Exit status 0 on pass, 2 on a failed verdict, 1 on error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::Status;
use config::{knob_help, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "critpersist", version, about = "Critical points near nondegenerate critical manifolds")]
#[command(after_long_help = knob_help())]
struct Cli {
    /// Worker threads for parallel sections; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spectral splitting of a matrix file with a Riesz cross-check.
    Split {
        matrix: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        zero_tol: f64,
        /// Target quadrature accuracy of the Riesz projectors.
        #[arg(long, default_value_t = 1e-13)]
        accuracy: f64,
    },
    /// Grassmannian inequalities over random subspaces.
    Grassmann {
        #[arg(long, required = true)]
        selftest: bool,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        slack: f64,
    },
    /// Fiber splitting, mollification and Galerkin diagnostics.
    Bundle {
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Saddle verification, flow trajectories and deformation records.
    Flow {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perturbation sweep with critical point counts.
    Persist {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The uniformly small perturbation without critical points near the saddle.
    Counterexample {
        #[arg(long)]
        eps: f64,
    },
    /// Prints the default configuration.
    Defaults,
}

fn run(cli: Cli) -> Result<Status> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Split { matrix, zero_tol, accuracy } => commands::split(&matrix, zero_tol, accuracy),
        Command::Grassmann { trials, seed, slack, .. } => commands::grassmann_selftest(trials, seed, slack),
        Command::Bundle { config, out } => commands::bundle(&RunConfig::load(&config)?, out.as_deref()),
        Command::Flow { config, out } => commands::flow(&RunConfig::load(&config)?, out.as_deref()),
        Command::Persist { config, out } => commands::persist(&RunConfig::load(&config)?, out.as_deref()),
        Command::Counterexample { eps } => commands::counterexample_record(eps),
        Command::Defaults => {
            print!("{}", RunConfig::default().emit()?);
            Ok(Status::Pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::VerdictFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
