//! `converge-meanfield`: bounded-Lipschitz distance between particle
//! empirical measures and the non-local limit solution, over an N sweep.

use crate::cmd_solve::{solve_limit, System};
use crate::config::Resolved;
use crate::csvio::{f, CsvFile};
use crate::manifest::{hex_digest, RunManifest};
use crate::runner::{parallel_map, prepare_out_dir, Job};
use crate::HarnessError;
use episcale_core::engine::simulate;
use episcale_core::grid::GridField;
use episcale_core::measure::EmpiricalMeasure;
use episcale_core::model::sample_initial_population;
use episcale_core::stats::{mean, median, slope_fit, stderr_mean};
use episcale_core::transport::{bl_grid_triple, AtomSet};
use std::io::{Read, Write};
use std::path::Path;

pub const METRIC: &str = "bl_to_limit";

pub fn run(
    resolved: &Resolved,
    out: &Path,
    force: bool,
    cache: Option<&Path>,
) -> Result<(), HarnessError> {
    if !matches!(
        resolved.params.regime,
        episcale_core::model::Regime::MeanField(_)
    ) {
        return Err(HarnessError::Config(
            "converge-meanfield requires the meanfield regime".into(),
        ));
    }
    if resolved.ns.len() < 3 {
        return Err(HarnessError::Config(
            "run.n: convergence sweeps need at least three population sizes".into(),
        ));
    }
    prepare_out_dir(out, force)?;
    let mut manifest = RunManifest::new("converge-meanfield", &resolved.file, resolved.seed);

    let limit = limit_with_cache(resolved, cache)?;
    let limit_atoms: Vec<[AtomSet; 3]> = limit.iter().map(|(_, g)| g.to_atom_sets()).collect();

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

    let results: Vec<Vec<f64>> = parallel_map(resolved.workers, &jobs, |job| {
        let pop = sample_initial_population(&resolved.dist, job.n, job.seed)?;
        let traj = simulate(
            &pop,
            &resolved.params,
            &resolved.snapshot_times,
            job.seed ^ 0x9E37_79B9_7F4A_7C15,
        )?;
        let mut distances = Vec::with_capacity(traj.snapshots.len());
        for (k, snap) in traj.snapshots.iter().enumerate() {
            let mu = EmpiricalMeasure::from_states(&traj.initial.individuals, &snap.states);
            distances.push(bl_grid_triple(
                &mu.to_atom_sets(),
                &limit_atoms[k],
                episcale_core::transport::METRIC_GRID_N,
            ));
        }
        Ok(distances)
    })?;

    write_reports(resolved, out, &jobs, &results, METRIC, None)?;
    manifest.finalize(out)?;
    Ok(())
}

/// Shared report writer for convergence sweeps: raw distances, per-(t, N)
/// aggregates, and per-time slope fits of the medians.
pub fn write_reports(
    resolved: &Resolved,
    out: &Path,
    jobs: &[Job],
    results: &[Vec<f64>],
    metric: &str,
    beta: Option<f64>,
) -> Result<(), HarnessError> {
    let beta_str = beta.map(|b| f(b)).unwrap_or_default();
    let mut distances = CsvFile::create(
        &out.join("distances.csv"),
        "distances",
        &["n", "beta", "t", "metric", "value", "replica", "seed"],
    )?;
    for (job, row) in jobs.iter().zip(results) {
        for (k, value) in row.iter().enumerate() {
            distances.row(&[
                job.n.to_string(),
                beta_str.clone(),
                f(resolved.snapshot_times[k]),
                metric.to_string(),
                f(*value),
                job.replica.to_string(),
                job.seed.to_string(),
            ])?;
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
    for (k, &t) in resolved.snapshot_times.iter().enumerate() {
        let mut medians = Vec::new();
        for &n in &resolved.ns {
            let values: Vec<f64> = jobs
                .iter()
                .zip(results)
                .filter(|(job, _)| job.n == n)
                .map(|(_, row)| row[k])
                .collect();
            let med = median(&values);
            let se = if values.len() >= 2 {
                f(stderr_mean(&values))
            } else {
                String::new()
            };
            convergence.row(&[
                metric.to_string(),
                f(t),
                n.to_string(),
                values.len().to_string(),
                f(med),
                f(mean(&values)),
                se,
            ])?;
            medians.push((n as f64, med));
        }
        if medians.iter().all(|&(_, v)| v > 0.0) {
            if let Ok(fit) = slope_fit(&medians) {
                slopes.row(&[
                    metric.to_string(),
                    f(t),
                    f(fit.slope),
                    f(fit.intercept),
                    f(fit.stderr),
                    medians.len().to_string(),
                ])?;
            }
        }
    }
    convergence.finish()?;
    slopes.finish()?;
    Ok(())
}

/// Re-solve the limit system, or load it from a digest-verified cache file.
fn limit_with_cache(
    resolved: &Resolved,
    cache: Option<&Path>,
) -> Result<Vec<(f64, GridField)>, HarnessError> {
    let Some(dir) = cache else {
        return solve_limit(resolved, System::Nonlocal);
    };
    let key_input = serde_json::json!({
        "model": format!("{:?}", resolved.params),
        "initial": format!("{:?}", resolved.file.initial),
        "grid": resolved.grid,
        "dt": resolved.dt,
        "times": resolved.snapshot_times,
        "system": "nonlocal",
    });
    let key = hex_digest(key_input.to_string().as_bytes());
    let path = dir.join(format!("{key}.fields"));
    if path.exists() {
        if let Ok(fields) = load_cached_fields(&path, &key, resolved.snapshot_times.len()) {
            log::info!("limit cache hit: {}", path.display());
            return Ok(fields);
        }
        log::warn!("limit cache at {} failed verification; re-solving", path.display());
    }
    let solution = solve_limit(resolved, System::Nonlocal)?;
    std::fs::create_dir_all(dir)?;
    let mut file = std::fs::File::create(&path)?;
    writeln!(file, "{key} {}", solution.len())?;
    for (t, field) in &solution {
        field.write_raw(&mut file, *t)?;
    }
    Ok(solution)
}

fn load_cached_fields(
    path: &Path,
    key: &str,
    expect: usize,
) -> Result<Vec<(f64, GridField)>, HarnessError> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);
    let mut header = String::new();
    std::io::BufRead::read_line(&mut reader, &mut header)?;
    let mut parts = header.split_whitespace();
    let stored_key = parts.next().unwrap_or_default();
    let count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| HarnessError::Config("cache header".into()))?;
    if stored_key != key || count != expect {
        return Err(HarnessError::Config("cache key mismatch".into()));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (field, t) = GridField::read_raw(&mut reader)?;
        out.push((t, field));
    }
    // Must be fully consumed.
    let mut buf = [0u8; 1];
    if reader.read(&mut buf)? != 0 {
        return Err(HarnessError::Config("cache trailing bytes".into()));
    }
    Ok(out)
}
