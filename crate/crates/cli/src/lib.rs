//! Experiment harness around the core simulation crate: configuration,
//! replica scheduling, reproducible seeds, CSV reports, and the
//! convergence/diagnostic drivers exposed as CLI subcommands.

pub mod cmd_converge_local;
pub mod cmd_converge_meanfield;
pub mod cmd_diagnostics;
pub mod cmd_simulate;
pub mod cmd_solve;
pub mod config;
pub mod csvio;
pub mod manifest;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Invalid configuration or CLI usage (exit code 2).
    #[error("{0}")]
    Config(String),
    /// Numerical failure in a solver or simulation (exit code 3).
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical(_) => 3,
            _ => 1,
        }
    }
}

impl From<episcale_core::Error> for HarnessError {
    fn from(e: episcale_core::Error) -> Self {
        match e {
            episcale_core::Error::Numerical { .. } => HarnessError::Numerical(e.to_string()),
            episcale_core::Error::Io(io) => HarnessError::Io(io),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

/// Re-run a completed run from its manifest: same command, same config,
/// same master seed, fresh output directory. Data files must come out
/// digest-identical.
pub fn rerun_from_manifest(
    from: &std::path::Path,
    out: &std::path::Path,
    workers: Option<usize>,
    force: bool,
) -> Result<(), HarnessError> {
    let man = manifest::RunManifest::load(from)?;
    let resolved = man.config.resolve(Some(man.master_seed), workers)?;
    dispatch(&man.command, &resolved, out, force, None)
}

/// Dispatch a command name to its driver.
pub fn dispatch(
    command: &str,
    resolved: &config::Resolved,
    out: &std::path::Path,
    force: bool,
    cache: Option<&std::path::Path>,
) -> Result<(), HarnessError> {
    match command {
        "simulate" => cmd_simulate::run(resolved, out, force),
        "solve-nonlocal" => cmd_solve::run(resolved, out, force, cmd_solve::System::Nonlocal),
        "solve-local" => cmd_solve::run(resolved, out, force, cmd_solve::System::Local),
        "converge-meanfield" => cmd_converge_meanfield::run(resolved, out, force, cache),
        "converge-local" => cmd_converge_local::run(resolved, out, force),
        "diagnostics" => cmd_diagnostics::run(resolved, out, force),
        other => Err(HarnessError::Config(format!("unknown command {other:?}"))),
    }
}
