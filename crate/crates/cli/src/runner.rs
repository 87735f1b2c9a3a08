//! Worker-pool execution of replica jobs.
//!
//! Each worker runs whole replicas; results come back in job order, so
//! every aggregate and output file is independent of the worker count.

use crate::HarnessError;
use rayon::prelude::*;
use std::path::Path;

/// One simulation job: population size, its index in the sweep, the
/// replica number, and the derived stream seed.
#[derive(Debug, Clone, Copy)]
pub struct Job {
    pub n: usize,
    pub n_index: usize,
    pub replica: usize,
    pub seed: u64,
}

/// Run `f` over the jobs on a dedicated pool of `workers` threads,
/// preserving job order in the results.
pub fn parallel_map<T: Send>(
    workers: usize,
    jobs: &[Job],
    f: impl Fn(&Job) -> Result<T, HarnessError> + Sync,
) -> Result<Vec<T>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Other(format!("worker pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(|j| f(j)).collect())
}

/// Create the output directory; refuse to reuse a non-empty one unless
/// `force` is given.
pub fn prepare_out_dir(path: &Path, force: bool) -> Result<(), HarnessError> {
    if path.exists() {
        let non_empty = std::fs::read_dir(path)?.next().is_some();
        if non_empty && !force {
            return Err(HarnessError::Config(format!(
                "output directory {} exists and is not empty (use --force)",
                path.display()
            )));
        }
        if non_empty {
            for entry in std::fs::read_dir(path)? {
                let entry = entry?;
                if entry.file_type()?.is_file() {
                    std::fs::remove_file(entry.path())?;
                }
            }
        }
    } else {
        std::fs::create_dir_all(path)?;
    }
    Ok(())
}
