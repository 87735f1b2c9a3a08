//! Empirical measures, mollified densities, and the commutator field.

use crate::cells::CellGrid;
use crate::engine::TestTriple;
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::grid::GridField;
use crate::kernel::KernelSpec;
use crate::model::{HealthState, Individual, PopulationState};
use crate::transport::{aggregate_to_grid, grid_flow_distance, AtomSet, GridSpec};

/// The empirical measure triple: atoms of weight `1/N` at individual
/// positions, split by compartment. Total mass across compartments is one
/// exactly (integer counts times `1/N`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub n: usize,
    pub atoms: [Vec<Point>; 3],
}

impl EmpiricalMeasure {
    pub fn from_population(pop: &PopulationState) -> Self {
        Self::from_individuals(&pop.individuals)
    }

    pub fn from_individuals(individuals: &[Individual]) -> Self {
        let mut atoms = [Vec::new(), Vec::new(), Vec::new()];
        for ind in individuals {
            atoms[ind.state.index()].push(ind.position);
        }
        EmpiricalMeasure {
            n: individuals.len(),
            atoms,
        }
    }

    /// Measure at a trajectory snapshot: positions from the initial
    /// population, states from the snapshot.
    pub fn from_states(individuals: &[Individual], states: &[HealthState]) -> Self {
        assert_eq!(individuals.len(), states.len());
        let mut atoms = [Vec::new(), Vec::new(), Vec::new()];
        for (ind, st) in individuals.iter().zip(states) {
            atoms[st.index()].push(ind.position);
        }
        EmpiricalMeasure {
            n: individuals.len(),
            atoms,
        }
    }

    /// Component masses `(n_S/N, n_I/N, n_R/N)`.
    pub fn masses(&self) -> [f64; 3] {
        let n = self.n as f64;
        [
            self.atoms[0].len() as f64 / n,
            self.atoms[1].len() as f64 / n,
            self.atoms[2].len() as f64 / n,
        ]
    }

    /// Coupling `<mu, phi> = (1/N) sum_k phi^{A_k}(x_k)`.
    pub fn couple(&self, phi: &TestTriple) -> f64 {
        let fns = [&phi.s, &phi.i, &phi.r];
        let mut acc = 0.0;
        for (c, f) in fns.iter().enumerate() {
            for p in &self.atoms[c] {
                acc += f.eval(*p);
            }
        }
        acc / self.n as f64
    }

    pub fn component(&self, c: usize) -> AtomSet {
        let w = 1.0 / self.n as f64;
        AtomSet {
            points: self.atoms[c].clone(),
            weights: vec![w; self.atoms[c].len()],
        }
    }

    pub fn to_atom_sets(&self) -> [AtomSet; 3] {
        [self.component(0), self.component(1), self.component(2)]
    }
}

/// Scatter one atom's kernel profile onto the cells of `field`-like grid
/// geometry, calling `f(cell_idx, theta_value)` for covered cells.
fn scatter_kernel<F: FnMut(usize, f64)>(
    spec: &KernelSpec,
    n: usize,
    h: f64,
    x: Point,
    mut f: F,
) {
    let r = spec.support_radius();
    let lo_x = (((x.x - r) / h - 0.5).ceil().max(0.0)) as usize;
    let hi_x = (((x.x + r) / h - 0.5).floor()).min(n as f64 - 1.0) as usize;
    let lo_y = (((x.y - r) / h - 0.5).ceil().max(0.0)) as usize;
    let hi_y = (((x.y + r) / h - 0.5).floor()).min(n as f64 - 1.0) as usize;
    for iy in lo_y..=hi_y {
        let cy = (iy as f64 + 0.5) * h;
        for ix in lo_x..=hi_x {
            let cx = (ix as f64 + 0.5) * h;
            let v = spec.theta_n(cx - x.x, cy - x.y);
            if v != 0.0 {
                f(iy * n + ix, v);
            }
        }
    }
}

/// Mollified empirical density `rho^{N,A}(x_c) = (1/N) sum over atoms of
/// compartment A of theta_N(x_c - x_k)`, sampled at the cell centres of an
/// `n x n` grid over `D`. Mass escaping past the boundary is reported by
/// [`boundary_leakage`], not corrected.
pub fn mollified_density(mu: &EmpiricalMeasure, spec: &KernelSpec, n: usize) -> Result<GridField> {
    if !spec.is_local() {
        return Err(Error::InvalidParameter(
            "mollified density needs a local kernel".into(),
        ));
    }
    let mut field = GridField::zeros(n);
    let h = field.h();
    if h > spec.support_radius() / 2.0 {
        log::warn!(
            "grid spacing {h} under-resolves the kernel support {}",
            spec.support_radius()
        );
    }
    let w = 1.0 / mu.n as f64;
    for c in 0..3 {
        let comp = field.component_mut(c);
        for x in &mu.atoms[c] {
            scatter_kernel(spec, n, h, *x, |idx, v| comp[idx] += w * v);
        }
    }
    Ok(field)
}

/// All-particle mollified density `(1/N) sum over every atom`, the pointwise
/// upper bound for each compartment's density.
pub fn mollified_density_all(
    mu: &EmpiricalMeasure,
    spec: &KernelSpec,
    n: usize,
) -> Result<Vec<f64>> {
    if !spec.is_local() {
        return Err(Error::InvalidParameter(
            "mollified density needs a local kernel".into(),
        ));
    }
    let h = 1.0 / n as f64;
    let mut out = vec![0.0; n * n];
    let w = 1.0 / mu.n as f64;
    for c in 0..3 {
        for x in &mu.atoms[c] {
            scatter_kernel(spec, n, h, *x, |idx, v| out[idx] += w * v);
        }
    }
    Ok(out)
}

/// Fraction of a component's mass lost when the mollified density is
/// restricted to `D` (boundary leakage diagnostic).
pub fn boundary_leakage(mu: &EmpiricalMeasure, spec: &KernelSpec, n: usize, c: usize) -> Result<f64> {
    let field = mollified_density(mu, spec, n)?;
    let expected = mu.masses()[c];
    if expected == 0.0 {
        return Ok(0.0);
    }
    Ok((expected - field.masses()[c]) / expected)
}

/// The mollified measure of one compartment represented exactly for
/// transport: cell masses on a grid extended past the domain boundary by
/// the kernel support, with each atom's kernel weights normalised so the
/// atom contributes exactly `1/N`. Every unit of mass sits within the
/// support radius of its source atom, so
/// `W1(rho, mu) <= support_radius` holds by construction.
pub fn mollified_cells_extended(
    atoms: &[Point],
    atom_weight: f64,
    spec: &KernelSpec,
    n: usize,
) -> (Vec<f64>, GridSpec) {
    let h = 1.0 / n as f64;
    let r = spec.support_radius();
    let pad = (r / h).ceil() as usize + 1;
    let nx = n + 2 * pad;
    let gs = GridSpec {
        nx,
        ny: nx,
        h,
        x0: -(pad as f64) * h,
        y0: -(pad as f64) * h,
    };
    let mut cells = vec![0.0; gs.cells()];
    let mut weights = Vec::new();
    let mut indices = Vec::new();
    for x in atoms {
        weights.clear();
        indices.clear();
        // Scatter onto the extended grid.
        let lo_x = ((x.x - r - gs.x0) / h - 0.5).ceil().max(0.0) as usize;
        let hi_x = (((x.x + r - gs.x0) / h - 0.5).floor()).min(nx as f64 - 1.0) as usize;
        let lo_y = ((x.y - r - gs.y0) / h - 0.5).ceil().max(0.0) as usize;
        let hi_y = (((x.y + r - gs.y0) / h - 0.5).floor()).min(nx as f64 - 1.0) as usize;
        let mut total = 0.0;
        for iy in lo_y..=hi_y {
            let cy = gs.y0 + (iy as f64 + 0.5) * h;
            for ix in lo_x..=hi_x {
                let cx = gs.x0 + (ix as f64 + 0.5) * h;
                let v = spec.theta_n(cx - x.x, cy - x.y);
                if v > 0.0 {
                    weights.push(v);
                    indices.push(iy * nx + ix);
                    total += v;
                }
            }
        }
        if total > 0.0 {
            let scale = atom_weight / total;
            for (idx, w) in indices.iter().zip(&weights) {
                cells[*idx] += w * scale;
            }
        } else {
            // Kernel narrower than a cell: keep the atom in its own cell.
            cells[gs.cell_of(*x)] += atom_weight;
        }
    }
    (cells, gs)
}

/// `W1(rho^{N,A}, mu^{N,A})` for one compartment: the mollified measure on
/// the extended grid against the grid-snapped atoms, solved exactly on the
/// grid graph. The result is bounded by the kernel support radius.
pub fn w1_mollification(
    atoms: &[Point],
    n_pop: usize,
    spec: &KernelSpec,
    grid_n: usize,
) -> f64 {
    if atoms.is_empty() {
        return 0.0;
    }
    let w = 1.0 / n_pop as f64;
    let (rho_cells, gs) = mollified_cells_extended(atoms, w, spec, grid_n);
    let mu = AtomSet {
        points: atoms.to_vec(),
        weights: vec![w; atoms.len()],
    };
    let mu_cells = aggregate_to_grid(&mu, &gs);
    grid_flow_distance(&rho_cells, &mu_cells, &gs, false)
}

/// Componentwise mollification distance, summed over compartments.
pub fn w1_mollification_triple(mu: &EmpiricalMeasure, spec: &KernelSpec, grid_n: usize) -> f64 {
    (0..3)
        .map(|c| w1_mollification(&mu.atoms[c], mu.n, spec, grid_n))
        .sum()
}

/// The commutator field
/// `C(x) = (1/N) sum_{k: S} theta_N(x - x_k) rho^{N,I}(x_k)
///         - rho^{N,S}(x) rho^{N,I}(x)`,
/// the difference between mollifying the product and multiplying the
/// mollified densities. Its decay with `N` is what closes the local limit.
#[derive(Debug, Clone)]
pub struct CommutatorField {
    pub values: Vec<f64>,
    pub grid_n: usize,
    pub beta: f64,
    pub n_pop: usize,
}

impl CommutatorField {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }
}

pub fn commutator_field(
    mu: &EmpiricalMeasure,
    spec: &KernelSpec,
    grid_n: usize,
) -> Result<CommutatorField> {
    let KernelSpec::Local { beta, .. } = spec else {
        return Err(Error::InvalidParameter(
            "commutator needs a local kernel".into(),
        ));
    };
    let n_pop = mu.n;
    let w = 1.0 / n_pop as f64;
    let sus = &mu.atoms[0];
    let inf = &mu.atoms[1];

    // rho^{N,I} evaluated at the susceptible atom positions, via a cell
    // list over the infected atoms.
    let inf_grid = CellGrid::build(inf, spec.support_radius());
    let rho_i_at: Vec<f64> = sus
        .iter()
        .map(|xk| {
            let mut acc = 0.0;
            inf_grid.for_neighborhood(*xk, |j| {
                let xj = inf[j as usize];
                acc += spec.theta_n(xk.x - xj.x, xk.y - xj.y);
            });
            acc * w
        })
        .collect();

    let h = 1.0 / grid_n as f64;
    let mut term1 = vec![0.0; grid_n * grid_n];
    for (xk, wk) in sus.iter().zip(&rho_i_at) {
        scatter_kernel(spec, grid_n, h, *xk, |idx, v| term1[idx] += w * v * wk);
    }

    let rho = mollified_density(mu, spec, grid_n)?;
    let values: Vec<f64> = (0..grid_n * grid_n)
        .map(|idx| term1[idx] - rho.s[idx] * rho.i[idx])
        .collect();
    Ok(CommutatorField {
        values,
        grid_n,
        beta: *beta,
        n_pop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::TestFn;
    use crate::model::{
        sample_initial_population, InitialDistribution, ModelParams, Regime,
    };

    fn local_spec(n: usize, beta: f64) -> KernelSpec {
        let params = ModelParams::new(1.0, 1.0, 1.0, Regime::local(beta)).unwrap();
        KernelSpec::for_run(&params, n).unwrap()
    }

    #[test]
    fn empirical_measure_masses() {
        let dist = InitialDistribution::uniform_mix(1.0, 0.0, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 50, 1).unwrap();
        let mu = EmpiricalMeasure::from_population(&pop);
        assert_eq!(mu.masses(), [1.0, 0.0, 0.0]);
        let dist = InitialDistribution::uniform_mix(0.5, 0.3, 0.2).unwrap();
        let pop = sample_initial_population(&dist, 200, 2).unwrap();
        let mu = EmpiricalMeasure::from_population(&pop);
        let counts = pop.counts();
        assert_eq!(mu.masses()[0], counts[0] as f64 / 200.0);
        assert_eq!(mu.masses()[1], counts[1] as f64 / 200.0);
        let total: f64 = mu.masses().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_matches_direct_sum() {
        let dist = InitialDistribution::uniform_mix(0.4, 0.4, 0.2).unwrap();
        let pop = sample_initial_population(&dist, 300, 9).unwrap();
        let mu = EmpiricalMeasure::from_population(&pop);
        let phi = TestTriple {
            s: TestFn::Affine {
                ax: 1.0,
                ay: -0.5,
                b: 0.2,
            },
            i: TestFn::Cosine {
                kx: 2.0,
                ky: 1.0,
                amp: 0.7,
            },
            r: TestFn::Constant(0.1),
        };
        let direct: f64 = pop
            .individuals
            .iter()
            .map(|ind| phi.eval(ind.state, ind.position) / 300.0)
            .sum();
        assert!((mu.couple(&phi) - direct).abs() < 1e-15);
    }

    #[test]
    fn single_atom_density_peak() {
        let n_pop = 4;
        let spec = local_spec(n_pop, 0.25);
        let grid_n = 64;
        // Atom exactly at a cell centre.
        let h = 1.0 / grid_n as f64;
        let center = Point::new(0.5 + h / 2.0, 0.5 + h / 2.0);
        let mu = EmpiricalMeasure {
            n: n_pop,
            atoms: [vec![], vec![center], vec![]],
        };
        let rho = mollified_density(&mu, &spec, grid_n).unwrap();
        let idx = (0..rho.cells())
            .max_by(|&a, &b| rho.i[a].partial_cmp(&rho.i[b]).unwrap())
            .unwrap();
        assert_eq!(rho.cell_center(idx), center);
        let expected_peak = spec.theta_n(0.0, 0.0) / n_pop as f64;
        assert!((rho.i[idx] - expected_peak).abs() < 1e-12);
    }

    #[test]
    fn mollified_mass_is_preserved_on_extended_grid() {
        let dist = InitialDistribution::uniform_mix(0.6, 0.4, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 500, 4).unwrap();
        let mu = EmpiricalMeasure::from_population(&pop);
        let spec = local_spec(500, 0.25);
        let (cells, _gs) = mollified_cells_extended(&mu.atoms[1], 1.0 / 500.0, &spec, 64);
        let mass: f64 = cells.iter().sum();
        assert!(
            (mass - mu.masses()[1]).abs() < 1e-12,
            "extended-grid mass {mass} vs {}",
            mu.masses()[1]
        );
        // Interior restriction loses boundary mass, reported not corrected.
        let leak = boundary_leakage(&mu, &spec, 64, 1).unwrap();
        assert!(leak >= 0.0);
    }

    #[test]
    fn compartment_density_dominated_by_all_particle_density() {
        let dist = InitialDistribution::uniform_mix(0.5, 0.3, 0.2).unwrap();
        let pop = sample_initial_population(&dist, 400, 6).unwrap();
        let mu = EmpiricalMeasure::from_population(&pop);
        let spec = local_spec(400, 0.25);
        let rho = mollified_density(&mu, &spec, 48).unwrap();
        let all = mollified_density_all(&mu, &spec, 48).unwrap();
        for idx in 0..rho.cells() {
            for c in 0..3 {
                assert!(rho.component(c)[idx] <= all[idx] + 1e-12);
            }
        }
    }

    #[test]
    fn mollification_distance_respects_support_bound() {
        let dist = InitialDistribution::uniform_mix(0.7, 0.3, 0.0).unwrap();
        for n_pop in [64usize, 256] {
            let pop = sample_initial_population(&dist, n_pop, 8).unwrap();
            let mu = EmpiricalMeasure::from_population(&pop);
            let spec = local_spec(n_pop, 0.25);
            let d = w1_mollification_triple(&mu, &spec, 64);
            // Three components, each moved at most the support radius.
            assert!(
                d <= 3.0 * spec.support_radius(),
                "{d} vs bound {}",
                3.0 * spec.support_radius()
            );
            for c in 0..3 {
                let dc = w1_mollification(&mu.atoms[c], n_pop, &spec, 64);
                assert!(dc <= spec.support_radius(), "component {c}: {dc}");
            }
        }
    }

    #[test]
    fn commutator_vanishes_without_susceptibles() {
        let dist = InitialDistribution::uniform_mix(0.0, 1.0, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 100, 5).unwrap();
        let mu = EmpiricalMeasure::from_population(&pop);
        let spec = local_spec(100, 0.25);
        let c = commutator_field(&mu, &spec, 32).unwrap();
        assert_eq!(c.sup_norm(), 0.0);
    }

    #[test]
    fn commutator_vanishes_for_locally_constant_infected_density() {
        // Infected atoms on a fine periodic lattice: rho^{N,I} is constant
        // to superconvergent accuracy over every kernel support contained
        // in the lattice region, so the commutator collapses there.
        let n_pop = 65_536;
        let spec = local_spec(n_pop, 0.2); // support radius ~ 0.33
        let r = spec.support_radius();
        let mut inf = Vec::new();
        let m = 256; // lattice pitch 1/256 << support radius
        for iy in 0..m {
            for ix in 0..m {
                inf.push(Point::new(
                    (ix as f64 + 0.5) / m as f64,
                    (iy as f64 + 0.5) / m as f64,
                ));
            }
        }
        // Susceptibles at the centre so their kernel support stays covered
        // by the lattice.
        let sus = vec![
            Point::new(0.5, 0.5),
            Point::new(0.48, 0.52),
            Point::new(0.51, 0.49),
        ];
        let mu = EmpiricalMeasure {
            n: n_pop,
            atoms: [sus, inf, vec![]],
        };
        let grid_n = 16;
        let com = commutator_field(&mu, &spec, grid_n).unwrap();
        // Probe only cells whose own kernel support also stays inside the
        // lattice; past that the lattice cut-off makes rho^{N,I} vary.
        let probe = GridField::zeros(grid_n);
        let mut interior_sup = 0.0f64;
        let mut probed = 0;
        for idx in 0..com.values.len() {
            let p = probe.cell_center(idx);
            if p.x > r && p.x < 1.0 - r && p.y > r && p.y < 1.0 - r {
                interior_sup = interior_sup.max(com.values[idx].abs());
                probed += 1;
            }
        }
        assert!(probed > 0);
        assert!(interior_sup < 1e-12, "interior commutator {interior_sup}");
    }
}
