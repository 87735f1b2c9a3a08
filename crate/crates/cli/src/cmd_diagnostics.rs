//! `diagnostics`: martingale variance against its quadratic variation,
//! increment-bound slopes, and weak-formulation residual trends.

use crate::config::Resolved;
use crate::csvio::{f, CsvFile};
use crate::manifest::RunManifest;
use crate::runner::{parallel_map, prepare_out_dir, Job};
use crate::HarnessError;
use episcale_core::engine::{martingale_path, simulate, TestFn, TestTriple};
use episcale_core::measure::EmpiricalMeasure;
use episcale_core::model::{sample_initial_population, Regime};
use episcale_core::solver::weak_residual;
use episcale_core::stats::{mean, median, slope_fit, variance};
use episcale_core::transport::AtomSet;
use std::path::Path;

/// The fixed smooth test triple used by all diagnostics (`sup |phi| <= 1`).
pub fn diagnostic_phi() -> TestTriple {
    TestTriple {
        s: TestFn::Cosine {
            kx: 1.0,
            ky: 1.0,
            amp: 1.0,
        },
        i: TestFn::Affine {
            ax: 0.3,
            ay: -0.2,
            b: 0.1,
        },
        r: TestFn::Bump {
            cx: 0.5,
            cy: 0.5,
            r: 0.4,
            amp: 0.8,
        },
    }
}

/// Increment offsets as fractions of the horizon.
pub const THETA_FRACTIONS: [f64; 3] = [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0];

/// Number of points in the dense snapshot grid for the residual quadrature.
const RESIDUAL_GRID: usize = 17;

struct ReplicaDiag {
    m_terminal: f64,
    qv_total: f64,
    m_terminal_const: f64,
    sq_increments: Vec<f64>,
    residual: Option<f64>,
}

pub fn run(resolved: &Resolved, out: &Path, force: bool) -> Result<(), HarnessError> {
    prepare_out_dir(out, force)?;
    let mut manifest = RunManifest::new("diagnostics", &resolved.file, resolved.seed);
    let horizon = resolved.params.horizon;
    let phi = diagnostic_phi();
    let phi_const = TestTriple::constant(0.7);

    let thetas: Vec<f64> = THETA_FRACTIONS.iter().map(|f| f * horizon).collect();
    let mut snapshot_times: Vec<f64> = vec![0.0];
    snapshot_times.extend(&thetas);
    for k in 0..RESIDUAL_GRID {
        snapshot_times.push(horizon * k as f64 / (RESIDUAL_GRID - 1) as f64);
    }
    snapshot_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    snapshot_times.dedup();
    let theta_idx: Vec<usize> = thetas
        .iter()
        .map(|t| snapshot_times.iter().position(|s| s == t).unwrap())
        .collect();
    let zero_idx = snapshot_times.iter().position(|&s| s == 0.0).unwrap();
    let residual_kernel = match &resolved.params.regime {
        Regime::MeanField(k) => Some(k.clone()),
        Regime::Local { .. } => None,
    };

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

    let results: Vec<ReplicaDiag> = parallel_map(resolved.workers, &jobs, |job| {
        let pop = sample_initial_population(&resolved.dist, job.n, job.seed)?;
        let traj = simulate(
            &pop,
            &resolved.params,
            &snapshot_times,
            job.seed ^ 0x9E37_79B9_7F4A_7C15,
        )?;
        let diag = martingale_path(&traj, &resolved.params, &phi)?;
        let diag_const = martingale_path(&traj, &resolved.params, &phi_const)?;

        let couple_at = |k: usize| {
            EmpiricalMeasure::from_states(&traj.initial.individuals, &traj.snapshots[k].states)
                .couple(&phi)
        };
        let base = couple_at(zero_idx);
        let sq_increments = theta_idx
            .iter()
            .map(|&k| {
                let d = couple_at(k) - base;
                d * d
            })
            .collect();

        let residual = residual_kernel.as_ref().map(|kernel| {
            let measures: Vec<(f64, [AtomSet; 3])> = traj
                .snapshots
                .iter()
                .map(|snap| {
                    let mu =
                        EmpiricalMeasure::from_states(&traj.initial.individuals, &snap.states);
                    (snap.t, mu.to_atom_sets())
                })
                .collect();
            weak_residual(
                &measures,
                &phi,
                kernel,
                resolved.params.p,
                resolved.params.q,
            )
        });

        Ok(ReplicaDiag {
            m_terminal: diag.m_terminal,
            qv_total: diag.qv_total,
            m_terminal_const: diag_const.m_terminal,
            sq_increments,
            residual,
        })
    })?;

    let mut martingale = CsvFile::create(
        &out.join("martingale.csv"),
        "martingale",
        &["n", "replica", "seed", "m_terminal", "qv_total"],
    )?;
    for (job, diag) in jobs.iter().zip(&results) {
        martingale.row(&[
            job.n.to_string(),
            job.replica.to_string(),
            job.seed.to_string(),
            f(diag.m_terminal),
            f(diag.qv_total),
        ])?;
    }
    martingale.finish()?;

    let mut increments = CsvFile::create(
        &out.join("increments.csv"),
        "increments",
        &["n", "theta", "mean_sq", "replicas"],
    )?;
    let mut summary = CsvFile::create(
        &out.join("summary.csv"),
        "diag-summary",
        &["metric", "n", "value"],
    )?;
    let mut var_points = Vec::new();
    for &n in &resolved.ns {
        let rows: Vec<&ReplicaDiag> = jobs
            .iter()
            .zip(&results)
            .filter(|(job, _)| job.n == n)
            .map(|(_, d)| d)
            .collect();
        let m: Vec<f64> = rows.iter().map(|d| d.m_terminal).collect();
        let qv: Vec<f64> = rows.iter().map(|d| d.qv_total).collect();
        let m_const: Vec<f64> = rows.iter().map(|d| d.m_terminal_const).collect();
        let var_m = if m.len() >= 2 { variance(&m) } else { 0.0 };
        let mean_qv = mean(&qv);
        summary.row(&["var_m".into(), n.to_string(), f(var_m)])?;
        summary.row(&["mean_qv".into(), n.to_string(), f(mean_qv)])?;
        if mean_qv > 0.0 {
            summary.row(&[
                "isometry_ratio".into(),
                n.to_string(),
                f(var_m / mean_qv),
            ])?;
        }
        let var_const = if m_const.len() >= 2 {
            variance(&m_const)
        } else {
            0.0
        };
        summary.row(&["var_m_const_phi".into(), n.to_string(), f(var_const)])?;
        if var_m > 0.0 {
            var_points.push((n as f64, var_m));
        }

        // Per-theta means and the through-origin slope in theta.
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (ti, &theta) in thetas.iter().enumerate() {
            let means: Vec<f64> = rows.iter().map(|d| d.sq_increments[ti]).collect();
            let m_sq = mean(&means);
            increments.row(&[n.to_string(), f(theta), f(m_sq), means.len().to_string()])?;
            sxx += theta * theta;
            sxy += theta * m_sq;
        }
        summary.row(&["increment_slope".into(), n.to_string(), f(sxy / sxx)])?;

        let residuals: Vec<f64> = rows.iter().filter_map(|d| d.residual).collect();
        if !residuals.is_empty() {
            summary.row(&[
                "weak_residual_median".into(),
                n.to_string(),
                f(median(&residuals)),
            ])?;
        }
    }
    if var_points.len() >= 3 {
        if let Ok(fit) = slope_fit(&var_points) {
            summary.row(&["var_m_slope".into(), "0".into(), f(fit.slope)])?;
            summary.row(&["var_m_slope_stderr".into(), "0".into(), f(fit.stderr)])?;
        }
    }
    increments.finish()?;
    summary.finish()?;
    manifest.finalize(out)?;
    Ok(())
}
