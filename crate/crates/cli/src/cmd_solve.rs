//! `solve-nonlocal` / `solve-local`: integrate a limit system from the
//! configured initial density and export the fields.

use crate::config::Resolved;
use crate::csvio::{f, CsvFile};
use crate::manifest::RunManifest;
use crate::runner::prepare_out_dir;
use crate::HarnessError;
use episcale_core::grid::GridField;
use episcale_core::model::Regime;
use episcale_core::solver::{rk4_solve_at, LocalRhs, NonlocalRhs};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    Nonlocal,
    Local,
}

/// Solve the configured system at the snapshot times. Used by the solve
/// subcommands and re-used by the convergence drivers.
pub fn solve_limit(
    resolved: &Resolved,
    system: System,
) -> Result<Vec<(f64, GridField)>, HarnessError> {
    let field0 = GridField::from_density(&resolved.dist, resolved.grid);
    let snapshots = match system {
        System::Nonlocal => {
            let Regime::MeanField(kernel) = &resolved.params.regime else {
                return Err(HarnessError::Config(
                    "solve-nonlocal needs a meanfield regime with a kernel".into(),
                ));
            };
            let rhs = NonlocalRhs::new(
                kernel.clone(),
                resolved.params.p,
                resolved.params.q,
                resolved.grid,
            );
            rk4_solve_at(&rhs, &field0, resolved.dt, &resolved.snapshot_times)?
        }
        System::Local => {
            let rhs = LocalRhs {
                p: resolved.params.p,
                q: resolved.params.q,
            };
            rk4_solve_at(&rhs, &field0, resolved.dt, &resolved.snapshot_times)?
        }
    };
    Ok(snapshots)
}

pub fn run(
    resolved: &Resolved,
    out: &Path,
    force: bool,
    system: System,
) -> Result<(), HarnessError> {
    prepare_out_dir(out, force)?;
    let command = match system {
        System::Nonlocal => "solve-nonlocal",
        System::Local => "solve-local",
    };
    let manifest = RunManifest::new(command, &resolved.file, resolved.seed);
    if resolved.snapshot_times.is_empty() {
        return Err(HarnessError::Config(
            "run.snapshot_times: need at least one output time".into(),
        ));
    }
    let field0 = GridField::from_density(&resolved.dist, resolved.grid);
    let snapshots = solve_limit(resolved, system)?;

    let mut masses = CsvFile::create(
        &out.join("masses.csv"),
        "masses",
        &["t", "mass_s", "mass_i", "mass_r", "min_value", "max_cell_drift"],
    )?;
    for (k, (t, field)) in snapshots.iter().enumerate() {
        let mut csv = std::fs::File::create(out.join(format!("fields_{k:02}.csv")))?;
        writeln!(csv, "#episcale-csv v1 fields")?;
        field.write_csv(&mut csv)?;
        let mut raw = std::fs::File::create(out.join(format!("fields_{k:02}.f64")))?;
        field.write_raw(&mut raw, *t)?;

        let m = field.masses();
        let drift = (0..field.cells())
            .map(|c| (field.cell_sum(c) - field0.cell_sum(c)).abs())
            .fold(0.0f64, f64::max);
        masses.row(&[f(*t), f(m[0]), f(m[1]), f(m[2]), f(field.min_value()), f(drift)])?;
    }
    masses.finish()?;
    manifest.finalize(out)?;
    Ok(())
}
