use clap::{Args, Parser, Subcommand};
use episcale_cli::config::ConfigFile;
use episcale_cli::{dispatch, rerun_from_manifest, HarnessError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Spatial SIR particle simulator, limit-field solvers, and
/// convergence/diagnostic experiment drivers.
#[derive(Parser)]
#[command(name = "episcale", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSVs and the run manifest.
    #[arg(long)]
    out: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (whole replicas per worker).
    #[arg(long)]
    workers: Option<usize>,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Directory for digest-verified limit-solution caching.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run particle trajectories and export event logs and snapshots.
    Simulate(RunArgs),
    /// Integrate the kernel-coupled (non-local) system.
    SolveNonlocal(RunArgs),
    /// Integrate the pointwise (local) system.
    SolveLocal(RunArgs),
    /// Mean-field convergence sweep against the non-local solution.
    ConvergeMeanfield(RunArgs),
    /// Local-regime convergence sweep (mollification W1, grid L2,
    /// commutator supremum).
    ConvergeLocal(RunArgs),
    /// Martingale, increment, and weak-residual diagnostics.
    Diagnostics(RunArgs),
    /// Reproduce a previous run from its manifest.
    Rerun {
        /// Directory holding manifest.json of the run to reproduce.
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        force: bool,
    },
}

fn run_command(name: &str, args: &RunArgs) -> Result<(), HarnessError> {
    let config = ConfigFile::load(&args.config)?;
    let resolved = config.resolve(args.seed, args.workers)?;
    dispatch(name, &resolved, &args.out, args.force, args.cache.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => run_command("simulate", a),
        Command::SolveNonlocal(a) => run_command("solve-nonlocal", a),
        Command::SolveLocal(a) => run_command("solve-local", a),
        Command::ConvergeMeanfield(a) => run_command("converge-meanfield", a),
        Command::ConvergeLocal(a) => run_command("converge-local", a),
        Command::Diagnostics(a) => run_command("diagnostics", a),
        Command::Rerun {
            from,
            out,
            workers,
            force,
        } => rerun_from_manifest(from, out, *workers, *force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
