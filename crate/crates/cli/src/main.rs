use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fucb_lab::commands::{self, EXIT_OK, EXIT_VERIFY_FAILED};
use fucb_lab::{CliError, DemoLbArgs, Overrides};

#[derive(Parser)]
#[command(name = "fucb-lab", version, about = "Simulate functional UCB with covariates")]
struct Cli {
    /// Worker threads for replications
    #[arg(long, global = true, env = "FUCB_LAB_THREADS")]
    parallel: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write the results table
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-step records of replication 0 at every horizon to this file
        #[arg(long, value_name = "PATH")]
        trajectory: Option<PathBuf>,
    },
    /// Check the declared smoothness and margin constants of the configured environment
    Verify {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare regret on a random lower-bound instance with the minimax curve
    DemoLb {
        #[arg(long = "bins-per-axis", short = 'P')]
        bins_per_axis: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long)]
        sign_seed: u64,
        /// Comma-separated horizons
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<u64>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let parallelism = cli
        .parallel
        .filter(|&k| k > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut stdout = std::io::stdout().lock();

    let result: Result<i32, CliError> = match cli.command {
        Command::Run { config, seed, reps, out, trajectory } => {
            let overrides = Overrides { seed, reps, out, trajectory };
            commands::cmd_run(&config, &overrides, parallelism, &mut stdout).map(|_| EXIT_OK)
        }
        Command::Verify { config, seed } => commands::cmd_verify(&config, seed, &mut stdout)
            .map(|pass| if pass { EXIT_OK } else { EXIT_VERIFY_FAILED }),
        Command::DemoLb { bins_per_axis, gamma, alpha, dim, sign_seed, n_grid, reps, seed, out } => {
            let args = DemoLbArgs { bins_per_axis, gamma, alpha, dim, sign_seed, n_grid, reps, seed };
            commands::cmd_demo_lb(&args, out.as_deref(), parallelism, &mut stdout).map(|_| EXIT_OK)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
