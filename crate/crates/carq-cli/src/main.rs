//! carq: correlation kernels and dynamical entropy of finite-dimensional
//! operator-algebra chains.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use carq_cli::{commands, CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "carq",
    version,
    about = "Correlation kernels and dynamical entropy of finite-dimensional operator-algebra chains"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the anticommutation relations of the fermionic generators
    VerifyCar {
        /// Number of modes (1..=10)
        #[arg(long, default_value_t = 4)]
        modes: usize,
        /// Corrupt one generator first; verification must then fail
        #[arg(long, hide = true)]
        inject_fault: Option<usize>,
    },
    /// Kernel table and entropy series of a scenario file
    Entropy {
        /// Scenario JSON file
        scenario: PathBuf,
        /// Override the scenario's horizon
        #[arg(long)]
        horizon: Option<usize>,
        /// Override the enumeration cap
        #[arg(long)]
        cap: Option<u64>,
        /// Write the entropy series CSV here
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the kernel table CSV here
        #[arg(long)]
        kernel_csv: Option<PathBuf>,
    },
    /// Run the built-in two-level reference model and assert its closed form
    ReproducePaper {
        /// Occupation probability of the two-level state
        #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
        lambda: f64,
        /// Number of chain steps
        #[arg(long, default_value_t = 8)]
        horizon: usize,
        /// Write the entropy series CSV here
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the kernel table CSV here
        #[arg(long)]
        kernel_csv: Option<PathBuf>,
    },
    /// Maximize the entropy rate over a scenario's partition family
    Optimize {
        /// Scenario JSON file declaring a partition family
        scenario: PathBuf,
        /// Total number of rate evaluations allowed
        #[arg(long)]
        budget: usize,
        /// Override the scenario's horizon
        #[arg(long)]
        horizon: Option<usize>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Input("--threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Input(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::VerifyCar {
            modes,
            inject_fault,
        } => commands::cmd_verify_car(modes, inject_fault),
        Command::Entropy {
            scenario,
            horizon,
            cap,
            csv,
            kernel_csv,
        } => commands::cmd_entropy(&scenario, horizon, cap, csv.as_deref(), kernel_csv.as_deref()),
        Command::ReproducePaper {
            lambda,
            horizon,
            csv,
            kernel_csv,
        } => commands::cmd_reproduce_paper(lambda, horizon, csv.as_deref(), kernel_csv.as_deref()),
        Command::Optimize {
            scenario,
            budget,
            horizon,
        } => commands::cmd_optimize(&scenario, budget, horizon),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CARQ_LOG")).init();
    // Usage errors exit 1 under this binary's contract; clap's default of 2
    // is reserved for violated mathematical invariants.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
