//! `converge-local`: local-regime convergence diagnostics over an N sweep:
//! mollification W1 with its hard support bound, grid-L2 distance to the
//! local field solution, and the commutator supremum.

use crate::cmd_solve::{solve_limit, System};
use crate::config::Resolved;
use crate::csvio::{f, CsvFile};
use crate::manifest::RunManifest;
use crate::runner::{parallel_map, prepare_out_dir, Job};
use crate::HarnessError;
use episcale_core::engine::simulate;
use episcale_core::kernel::KernelSpec;
use episcale_core::measure::{
    commutator_field, mollified_density, w1_mollification_triple, EmpiricalMeasure,
};
use episcale_core::model::{sample_initial_population, Regime};
use episcale_core::stats::{mean, median, slope_fit, stderr_mean};
use std::path::Path;

pub const METRICS: [&str; 4] = [
    "w1_mollification",
    "w1_support_bound",
    "l2_vs_field",
    "commutator_sup",
];

/// One replica's diagnostics: per snapshot, per metric.
type ReplicaRow = Vec<[f64; 4]>;

pub fn run(resolved: &Resolved, out: &Path, force: bool) -> Result<(), HarnessError> {
    let Regime::Local { beta, .. } = resolved.params.regime else {
        return Err(HarnessError::Config(
            "converge-local requires the local regime".into(),
        ));
    };
    prepare_out_dir(out, force)?;
    let mut manifest = RunManifest::new("converge-local", &resolved.file, resolved.seed);

    let limit = solve_limit(resolved, System::Local)?;

    let mut jobs = Vec::new();
    for (n_index, &n) in resolved.ns.iter().enumerate() {
        for replica in 0..resolved.replicas {
            jobs.push(Job {
                n,
                n_index,
                replica,
                seed: manifest.seed_for(n, n_index, replica),
            });
        }
    }

    let results: Vec<ReplicaRow> = parallel_map(resolved.workers, &jobs, |job| {
        let pop = sample_initial_population(&resolved.dist, job.n, job.seed)?;
        let spec = KernelSpec::for_run(&resolved.params, job.n)?;
        let traj = simulate(
            &pop,
            &resolved.params,
            &resolved.snapshot_times,
            job.seed ^ 0x9E37_79B9_7F4A_7C15,
        )?;
        let bound = spec.support_radius();
        let mut rows = Vec::with_capacity(traj.snapshots.len());
        for (k, snap) in traj.snapshots.iter().enumerate() {
            let mu = EmpiricalMeasure::from_states(&traj.initial.individuals, &snap.states);
            let w1 = w1_mollification_triple(&mu, &spec, resolved.grid);
            let rho = mollified_density(&mu, &spec, resolved.grid)?;
            let l2 = rho.l2_distance(&limit[k].1);
            let com = commutator_field(&mu, &spec, resolved.grid)?.sup_norm();
            rows.push([w1, bound, l2, com]);
        }
        Ok(rows)
    })?;

    let mut distances = CsvFile::create(
        &out.join("distances.csv"),
        "distances",
        &["n", "beta", "t", "metric", "value", "replica", "seed"],
    )?;
    for (job, rows) in jobs.iter().zip(&results) {
        for (k, row) in rows.iter().enumerate() {
            for (m, name) in METRICS.iter().enumerate() {
                distances.row(&[
                    job.n.to_string(),
                    f(beta),
                    f(resolved.snapshot_times[k]),
                    name.to_string(),
                    f(row[m]),
                    job.replica.to_string(),
                    job.seed.to_string(),
                ])?;
            }
        }
    }
    distances.finish()?;

    let mut convergence = CsvFile::create(
        &out.join("convergence.csv"),
        "convergence",
        &["metric", "t", "n", "replicas", "median", "mean", "stderr"],
    )?;
    let mut slopes = CsvFile::create(
        &out.join("slopes.csv"),
        "slopes",
        &["metric", "t", "slope", "intercept", "stderr", "points"],
    )?;
    for (m, name) in METRICS.iter().enumerate() {
        for (k, &t) in resolved.snapshot_times.iter().enumerate() {
            let mut medians = Vec::new();
            for &n in &resolved.ns {
                let values: Vec<f64> = jobs
                    .iter()
                    .zip(&results)
                    .filter(|(job, _)| job.n == n)
                    .map(|(_, rows)| rows[k][m])
                    .collect();
                let med = median(&values);
                let se = if values.len() >= 2 {
                    f(stderr_mean(&values))
                } else {
                    String::new()
                };
                convergence.row(&[
                    name.to_string(),
                    f(t),
                    n.to_string(),
                    values.len().to_string(),
                    f(med),
                    f(mean(&values)),
                    se,
                ])?;
                medians.push((n as f64, med));
            }
            if medians.len() >= 3 && medians.iter().all(|&(_, v)| v > 0.0) {
                if let Ok(fit) = slope_fit(&medians) {
                    slopes.row(&[
                        name.to_string(),
                        f(t),
                        f(fit.slope),
                        f(fit.intercept),
                        f(fit.stderr),
                        medians.len().to_string(),
                    ])?;
                }
            }
        }
    }
    convergence.finish()?;
    slopes.finish()?;
    manifest.finalize(out)?;
    Ok(())
}
