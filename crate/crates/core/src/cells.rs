//! Cell-list spatial index.
//!
//! Positions never move, so cell membership is computed once. Queries scan
//! the 3x3 cell neighbourhood of a point; with cell side at least the kernel
//! support radius this is guaranteed to cover every interacting pair, making
//! compact-support rate sums O(neighbours) instead of O(N).

use crate::error::{Error, Result};
use crate::geom::{Point, DOMAIN_SIDE};
use crate::kernel::KernelSpec;
use crate::model::{HealthState, ModelParams, PopulationState, PressureTable};

/// Cap on the number of cells per side, bounding memory for tiny radii.
const MAX_CELLS_PER_SIDE: usize = 64;

/// Uniform bucketing of fixed points in the unit square.
#[derive(Debug, Clone)]
pub struct CellGrid {
    nx: usize,
    inv_side: f64,
    cells: Vec<Vec<u32>>,
}

impl CellGrid {
    /// Bucket `positions` into square cells of side at least `min_side`
    /// (clamped so there are at most [`MAX_CELLS_PER_SIDE`] cells per side;
    /// degenerate radii larger than the domain fall back to a single cell).
    pub fn build(positions: &[Point], min_side: f64) -> CellGrid {
        let nx = if min_side >= DOMAIN_SIDE {
            1
        } else {
            ((DOMAIN_SIDE / min_side).floor() as usize)
                .clamp(1, MAX_CELLS_PER_SIDE)
        };
        let mut cells = vec![Vec::new(); nx * nx];
        let inv_side = nx as f64 / DOMAIN_SIDE;
        for (i, p) in positions.iter().enumerate() {
            let c = cell_index(nx, inv_side, *p);
            cells[c].push(i as u32);
        }
        CellGrid {
            nx,
            inv_side,
            cells,
        }
    }

    pub fn cells_per_side(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn cell_of(&self, p: Point) -> usize {
        cell_index(self.nx, self.inv_side, p)
    }

    pub fn members(&self, cell: usize) -> &[u32] {
        &self.cells[cell]
    }

    /// Visit every index stored in the 3x3 cell neighbourhood of `p`,
    /// in row-major cell order (deterministic).
    #[inline]
    pub fn for_neighborhood<F: FnMut(u32)>(&self, p: Point, mut f: F) {
        let (ix, iy) = self.cell_coords(p);
        let x0 = ix.saturating_sub(1);
        let x1 = (ix + 1).min(self.nx - 1);
        let y0 = iy.saturating_sub(1);
        let y1 = (iy + 1).min(self.nx - 1);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                for &idx in &self.cells[cy * self.nx + cx] {
                    f(idx);
                }
            }
        }
    }

    /// Visit the 3x3 neighbourhood cells themselves.
    #[inline]
    pub fn for_neighborhood_cells<F: FnMut(usize)>(&self, p: Point, mut f: F) {
        let (ix, iy) = self.cell_coords(p);
        let x0 = ix.saturating_sub(1);
        let x1 = (ix + 1).min(self.nx - 1);
        let y0 = iy.saturating_sub(1);
        let y1 = (iy + 1).min(self.nx - 1);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                f(cy * self.nx + cx);
            }
        }
    }

    fn cell_coords(&self, p: Point) -> (usize, usize) {
        let ix = ((p.x * self.inv_side) as usize).min(self.nx - 1);
        let iy = ((p.y * self.inv_side) as usize).min(self.nx - 1);
        (ix, iy)
    }
}

#[inline]
fn cell_index(nx: usize, inv_side: f64, p: Point) -> usize {
    let ix = ((p.x * inv_side) as usize).min(nx - 1);
    let iy = ((p.y * inv_side) as usize).min(nx - 1);
    iy * nx + ix
}

/// Spatial index over a population for a local kernel. Immutable after
/// construction: cell membership never changes, and the per-cell infected
/// counts are a snapshot of the population at build time (used to skip
/// empty cells when initialising pressures).
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    grid: CellGrid,
    infected_at_build: Vec<u32>,
}

impl SpatialIndex {
    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    /// Number of infected individuals a cell held when the index was built.
    pub fn infected_at_build(&self, cell: usize) -> u32 {
        self.infected_at_build[cell]
    }
}

/// Build the cell list for a population under a local kernel.
/// Cell side is `max(support_radius, 1/64)`; construction is `O(N)`.
pub fn build_spatial_index(pop: &PopulationState, spec: &KernelSpec) -> Result<SpatialIndex> {
    if !spec.is_local() {
        return Err(Error::InvalidParameter(
            "spatial index is only used with local kernels".into(),
        ));
    }
    let positions: Vec<Point> = pop.individuals.iter().map(|ind| ind.position).collect();
    let grid = CellGrid::build(&positions, spec.support_radius());
    let mut infected_at_build = vec![0u32; grid.cells.len()];
    for ind in &pop.individuals {
        if ind.state == HealthState::I {
            infected_at_build[grid.cell_of(ind.position)] += 1;
        }
    }
    Ok(SpatialIndex {
        grid,
        infected_at_build,
    })
}

/// Infection pressure `lambda_i = sum over currently infected j of
/// tau_N(i, j)` for a susceptible individual, scanning only the 3x3 cell
/// neighbourhood in the local regime.
pub fn infection_pressure(
    pop: &PopulationState,
    index: &SpatialIndex,
    spec: &KernelSpec,
    i: usize,
) -> Result<f64> {
    let ind = &pop.individuals[i];
    if ind.state != HealthState::S {
        return Err(Error::InvalidParameter(format!(
            "individual {i} is not susceptible"
        )));
    }
    let mut acc = 0.0;
    index.grid.for_neighborhood(ind.position, |j| {
        let other = &pop.individuals[j as usize];
        if other.state == HealthState::I {
            acc += spec.eval_tau(ind.position, other.position);
        }
    });
    Ok(acc)
}

/// Brute-force `O(N)` pressure sum over all infected individuals
/// (independent oracle for the indexed path).
pub fn infection_pressure_brute(pop: &PopulationState, spec: &KernelSpec, i: usize) -> f64 {
    let xi = pop.individuals[i].position;
    pop.individuals
        .iter()
        .filter(|ind| ind.state == HealthState::I)
        .map(|ind| spec.eval_tau(xi, ind.position))
        .sum()
}

/// Recompute the whole pressure table from scratch:
/// constant mean-field kernels collapse to one shared value, general
/// mean-field kernels take `O(n_S * n_I)`, local kernels scatter each
/// infected individual's contribution over its cell neighbourhood.
pub fn recompute_pressure(
    pop: &PopulationState,
    params: &ModelParams,
    spec: &KernelSpec,
    index: Option<&SpatialIndex>,
) -> PressureTable {
    let n = pop.len() as f64;
    match spec {
        KernelSpec::MeanField { t, q, .. } if t.is_constant() => {
            let value = t.sup();
            PressureTable::Uniform {
                per_susceptible: q / n * value * pop.n_infected() as f64,
            }
        }
        KernelSpec::MeanField { .. } => {
            let mut table = vec![0.0; pop.len()];
            let infected: Vec<Point> = pop
                .individuals
                .iter()
                .filter(|ind| ind.state == HealthState::I)
                .map(|ind| ind.position)
                .collect();
            for (i, ind) in pop.individuals.iter().enumerate() {
                if ind.state == HealthState::S {
                    table[i] = infected
                        .iter()
                        .map(|&xj| spec.eval_tau(ind.position, xj))
                        .sum();
                }
            }
            PressureTable::PerIndividual(table)
        }
        KernelSpec::Local { .. } => {
            let index = index.expect("local regime requires a spatial index");
            let mut table = vec![0.0; pop.len()];
            for (j, ind) in pop.individuals.iter().enumerate() {
                if ind.state != HealthState::I {
                    continue;
                }
                let xj = ind.position;
                index.grid.for_neighborhood(xj, |k| {
                    let other = &pop.individuals[k as usize];
                    if other.state == HealthState::S {
                        table[k as usize] += spec.eval_tau(other.position, xj);
                    }
                });
                let _ = j;
            }
            PressureTable::PerIndividual(table)
        }
    }
    .validate_params(params)
}

impl PressureTable {
    // Rates scale with q through eval_tau already; nothing further to do,
    // but keep the hook so the call site documents which params were used.
    fn validate_params(self, _params: &ModelParams) -> Self {
        self
    }
}
