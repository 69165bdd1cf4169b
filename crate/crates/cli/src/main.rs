//! `ifbs` command line: instance generation, experiment batches, trace
//! diagnostics, and schedule validation.

mod commands;
mod config;
mod grammar;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AnalyzeArgs, GenerateArgs, ValidateArgs};

#[derive(Parser)]
#[command(name = "ifbs", version, about = "Inertial forward-backward splitting solvers for l1-regularized least squares")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate (or import) an instance container and print its digest.
    Generate {
        /// Number of rows of A.
        #[arg(long)]
        m: Option<usize>,
        /// Number of columns of A (the variable dimension).
        #[arg(long)]
        n: Option<usize>,
        /// Support size of the planted signal.
        #[arg(long)]
        sparsity: Option<usize>,
        /// Standard deviation of the Gaussian entries of A.
        #[arg(long, default_value_t = 0.1)]
        std: f64,
        /// l1 weight.
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        /// Generator seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output container path.
        #[arg(long)]
        out: PathBuf,
        /// Import mode: matrix CSV (one row per line).
        #[arg(long)]
        from_a_csv: Option<PathBuf>,
        /// Import mode: offset vector CSV.
        #[arg(long)]
        from_b_csv: Option<PathBuf>,
    },
    /// Run a batch of algorithms described by a config file.
    Run {
        /// Config file path (see README for the format).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `out_dir`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Identification, bound, rate, and oscillation reports for recorded runs.
    Analyze {
        /// Directory holding the run outputs (trace CSVs, summaries, snapshots).
        #[arg(long)]
        dir: PathBuf,
        /// Instance container the runs were produced from.
        #[arg(long)]
        instance: PathBuf,
        /// Comma-separated algorithm names (default: every trace in the directory).
        #[arg(long, value_delimiter = ',')]
        algo: Vec<String>,
        /// Boundary-set classification threshold on `rho - |h*_i|`.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        /// Final fraction of post-identification iterations used by the rate fit.
        #[arg(long, default_value_t = 0.5)]
        window_fraction: f64,
        /// Reference gap tolerance when reference.json is absent.
        #[arg(long, default_value_t = 1e-12)]
        gap_tol: f64,
    },
    /// Check a schedule against the convergence hypotheses and print the report.
    ValidateSchedule {
        /// Schedule text, e.g. "capped inner=fista-bt cap=0.99".
        #[arg(long)]
        schedule: String,
        /// Number of feedback-free iterations to inspect.
        #[arg(long, default_value_t = 10_000)]
        horizon: u64,
        /// Gradient Lipschitz constant to validate step sizes against.
        #[arg(long)]
        lipschitz: Option<f64>,
        /// Instance container to take the Lipschitz constant from.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Commands::Generate {
            m,
            n,
            sparsity,
            std,
            rho,
            seed,
            out,
            from_a_csv,
            from_b_csv,
        } => commands::cmd_generate(GenerateArgs {
            m,
            n,
            sparsity,
            std,
            rho,
            seed,
            out,
            from_a_csv,
            from_b_csv,
        }),
        Commands::Run { config, out_dir } => commands::cmd_run(&config, out_dir),
        Commands::Analyze {
            dir,
            instance,
            algo,
            threshold,
            window_fraction,
            gap_tol,
        } => commands::cmd_analyze(AnalyzeArgs {
            dir,
            instance,
            algos: algo,
            threshold,
            window_fraction,
            gap_tol,
        }),
        Commands::ValidateSchedule {
            schedule,
            horizon,
            lipschitz,
            instance,
        } => commands::cmd_validate(ValidateArgs {
            schedule,
            horizon,
            lipschitz,
            instance,
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
