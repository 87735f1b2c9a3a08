//! Optimal-transport distances between atomic measures.
//!
//! One uncapacitated min-cost-flow network simplex backs everything here:
//!
//! * [`w1_exact`] — exact Wasserstein-1 between equal-mass atom sets
//!   (complete bipartite network, Euclidean costs);
//! * [`bounded_lipschitz`] — the flat metric (`sup` over 1-Lipschitz
//!   functions bounded by one). For small atom sets this is the bipartite
//!   network plus a "void" node at unit cost, so mass may be created or
//!   destroyed; large inputs are aggregated onto a grid first and solved as
//!   a flow on the grid graph, which is precisely the dual of the grid LP
//!   over discretised test functions with Lipschitz constraints on edges.
//! * [`w1_triple`] — componentwise distance over the three compartments,
//!   summed, choosing the exact or grid route per component.
//!
//! The big-M phase is handled symbolically (costs carry a separate M
//! coefficient), so artificial arcs never pollute the floating-point
//! arithmetic of real costs.

use crate::error::{Error, Result};
use crate::geom::Point;

/// Combined atom-count cap for the exact bipartite solver; larger inputs
/// are grid-aggregated first.
pub const EXACT_SOLVER_ATOM_CAP: usize = 4096;

/// Grid resolution used when measures must be aggregated.
pub const METRIC_GRID_N: usize = 64;

/// A finite positive measure as weighted atoms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AtomSet {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl AtomSet {
    pub fn from_parts(points: Vec<Point>, weights: Vec<f64>) -> Self {
        assert_eq!(points.len(), weights.len());
        AtomSet { points, weights }
    }

    /// Equal weights `1/n` at the given points.
    pub fn uniform(points: Vec<Point>) -> Self {
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        AtomSet { points, weights }
    }

    pub fn push(&mut self, p: Point, w: f64) {
        self.points.push(p);
        self.weights.push(w);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Copy without zero-weight atoms.
    fn pruned(&self) -> AtomSet {
        let mut out = AtomSet::default();
        for (p, w) in self.points.iter().zip(&self.weights) {
            if *w > 0.0 {
                out.push(*p, *w);
            }
        }
        out
    }

    /// Translate every atom by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> AtomSet {
        AtomSet {
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
            weights: self.weights.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Network simplex
// ---------------------------------------------------------------------------

/// Cost with a symbolic big-M component: `re + m * M`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost2 {
    re: f64,
    m: f64,
}

impl Cost2 {
    const ZERO: Cost2 = Cost2 { re: 0.0, m: 0.0 };
    const BIG_M: Cost2 = Cost2 { re: 0.0, m: 1.0 };

    fn real(re: f64) -> Cost2 {
        Cost2 { re, m: 0.0 }
    }

    fn add(self, o: Cost2) -> Cost2 {
        Cost2 {
            re: self.re + o.re,
            m: self.m + o.m,
        }
    }

    fn sub(self, o: Cost2) -> Cost2 {
        Cost2 {
            re: self.re - o.re,
            m: self.m - o.m,
        }
    }

    /// `self < -tol` lexicographically in (m, re).
    fn is_negative(&self, tol: f64) -> bool {
        if self.m < -0.5 {
            true
        } else if self.m > 0.5 {
            false
        } else {
            self.re < -tol
        }
    }

    fn less_than(&self, other: &Cost2) -> bool {
        if (self.m - other.m).abs() > 0.5 {
            self.m < other.m
        } else {
            self.re < other.re
        }
    }
}

/// Starting basis for the simplex.
pub(crate) enum InitialBasis {
    /// Artificial arcs to a synthetic root with a symbolic big-M phase.
    Artificial,
    /// A caller-supplied spanning tree of real arcs: for every node except
    /// the root, the arc ids pointing to the parent (`up`) and from the
    /// parent (`down`); the solver picks one per node by flow sign.
    Tree {
        root: usize,
        up: Vec<u32>,
        down: Vec<u32>,
        parent: Vec<u32>,
    },
}

/// Uncapacitated min-cost flow problem on directed arcs with node supplies
/// (positive = source). Supplies must balance to zero up to rounding; the
/// residual is folded into the largest supply before solving.
pub(crate) struct FlowProblem {
    pub n: usize,
    pub arcs: Vec<(u32, u32)>,
    pub costs: Vec<f64>,
    pub supply: Vec<f64>,
    pub basis: InitialBasis,
}

pub(crate) struct FlowSolution {
    pub cost: f64,
    /// Largest residual flow left on an artificial arc (should be ~0).
    pub artificial_residual: f64,
}

struct Simplex {
    root: usize,
    n_real_arcs: usize,
    arcs: Vec<(u32, u32)>,
    costs: Vec<f64>, // real part; artificial arcs carry M instead
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<u32>,
    pred_arc: Vec<u32>,
    depth: Vec<u32>,
    children: Vec<Vec<u32>>,
    pi: Vec<Cost2>,
    tol: f64,
}

impl Simplex {
    fn arc_cost(&self, a: usize) -> Cost2 {
        if a < self.n_real_arcs {
            Cost2::real(self.costs[a])
        } else {
            Cost2::BIG_M
        }
    }

    fn reduced(&self, a: usize) -> Cost2 {
        let (u, v) = self.arcs[a];
        self.arc_cost(a)
            .sub(self.pi[u as usize])
            .add(self.pi[v as usize])
    }

    /// Rebuild depth and potentials for the whole tree from the root,
    /// using the current parent/children structure. Used at initialisation
    /// and periodically to wash floating-point drift out of the potentials.
    fn refresh_tree(&mut self) {
        self.depth[self.root] = 0;
        self.pi[self.root] = Cost2::ZERO;
        let mut stack = vec![self.root as u32];
        while let Some(x) = stack.pop() {
            let xi = x as usize;
            for k in 0..self.children[xi].len() {
                let y = self.children[xi][k];
                let yi = y as usize;
                let a = self.pred_arc[yi] as usize;
                let (u, _) = self.arcs[a];
                self.depth[yi] = self.depth[xi] + 1;
                // Tree arcs have zero reduced cost: c - pi_from + pi_to = 0.
                self.pi[yi] = if u == x {
                    // arc x -> y: pi_y = pi_x - c
                    self.pi[xi].sub(self.arc_cost(a))
                } else {
                    // arc y -> x: pi_y = c + pi_x
                    self.arc_cost(a).add(self.pi[xi])
                };
                stack.push(y);
            }
        }
    }

    /// Collect the cycle path from `x` up to `stop`, recording
    /// `(arc, child_node)` pairs.
    fn path_up(&self, mut x: u32, stop: u32, out: &mut Vec<(u32, u32)>) {
        while x != stop {
            out.push((self.pred_arc[x as usize], x));
            x = self.parent[x as usize];
        }
    }

    fn pivot(&mut self, entering: usize) {
        let (eu, ev) = self.arcs[entering];
        let entering_reduced = self.reduced(entering);
        // Find the apex (LCA of eu, ev).
        let (mut a, mut b) = (eu, ev);
        while self.depth[a as usize] > self.depth[b as usize] {
            a = self.parent[a as usize];
        }
        while self.depth[b as usize] > self.depth[a as usize] {
            b = self.parent[b as usize];
        }
        while a != b {
            a = self.parent[a as usize];
            b = self.parent[b as usize];
        }
        let apex = a;

        let mut u_side = Vec::new();
        let mut v_side = Vec::new();
        self.path_up(eu, apex, &mut u_side);
        self.path_up(ev, apex, &mut v_side);

        // Cycle traversal order starting at the apex, following the
        // entering arc's direction: down the u side, entering arc, up the
        // v side. An arc "decreases" if the cycle runs against it.
        // ordered: (arc, child, on_u_side)
        let ordered: Vec<(u32, u32, bool)> = u_side
            .iter()
            .rev()
            .map(|&(arc, child)| (arc, child, true))
            .chain(v_side.iter().map(|&(arc, child)| (arc, child, false)))
            .collect();

        let decreases = |arc: u32, child: u32, on_u_side: bool| -> bool {
            let (from, _) = self.arcs[arc as usize];
            let points_up = from == child; // arc oriented child -> parent
            if on_u_side {
                // cycle runs parent -> child here: child->parent arcs decrease
                points_up
            } else {
                // cycle runs child -> parent: parent->child arcs decrease
                !points_up
            }
        };

        // theta = min flow among decreasing arcs; leaving arc = the LAST
        // blocking arc in cycle order (strong-feasibility tie-breaking).
        let mut theta = f64::INFINITY;
        for &(arc, child, side) in &ordered {
            if decreases(arc, child, side) {
                theta = theta.min(self.flow[arc as usize]);
            }
        }
        assert!(
            theta.is_finite(),
            "unbounded pivot in min-cost flow (negative-cost all-forward cycle)"
        );
        let mut leaving: Option<(u32, u32, bool)> = None;
        for &(arc, child, side) in &ordered {
            if decreases(arc, child, side) && self.flow[arc as usize] == theta {
                leaving = Some((arc, child, side));
            }
        }
        let (leaving, l_child, l_on_u_side) =
            leaving.expect("no leaving arc; entering arc forms a free cycle");

        // Apply the flow change around the cycle.
        if theta > 0.0 {
            for &(arc, child, side) in &ordered {
                if decreases(arc, child, side) {
                    self.flow[arc as usize] -= theta;
                } else {
                    self.flow[arc as usize] += theta;
                }
            }
        }
        self.flow[entering] = theta;
        self.in_tree[leaving as usize] = false;
        self.in_tree[entering] = true;

        // The leaving arc cuts off the subtree rooted at its child side.
        // The entering arc reconnects it through whichever of its endpoints
        // lies in that subtree (eu if the leaving arc was on the u side).
        let (w, z) = if l_on_u_side { (eu, ev) } else { (ev, eu) };

        // All potentials in the cut subtree shift by a constant.
        let delta = if self.arcs[entering].0 == z {
            Cost2::ZERO.sub(entering_reduced)
        } else {
            entering_reduced
        };

        // Re-hang the path w .. l_child, reversing parent links.
        let mut x = w;
        let mut new_parent = z;
        let mut new_arc = entering as u32;
        loop {
            let old_parent = self.parent[x as usize];
            let old_arc = self.pred_arc[x as usize];
            let op = old_parent as usize;
            if let Some(k) = self.children[op].iter().position(|&c| c == x) {
                self.children[op].swap_remove(k);
            }
            self.children[new_parent as usize].push(x);
            self.parent[x as usize] = new_parent;
            self.pred_arc[x as usize] = new_arc;
            if x == l_child {
                break;
            }
            new_parent = x;
            new_arc = old_arc;
            x = old_parent;
        }

        // Fix depth and potential across the re-hung subtree.
        let mut stack = vec![w];
        self.depth[w as usize] = self.depth[z as usize] + 1;
        self.pi[w as usize] = self.pi[w as usize].add(delta);
        while let Some(x) = stack.pop() {
            let xi = x as usize;
            for k in 0..self.children[xi].len() {
                let y = self.children[xi][k];
                let yi = y as usize;
                self.depth[yi] = self.depth[xi] + 1;
                self.pi[yi] = self.pi[yi].add(delta);
                stack.push(y);
            }
        }
    }

    fn optimize(&mut self) {
        let m = self.arcs.len();
        let block = (m as f64).sqrt().ceil() as usize * 4;
        let block = block.max(64).min(m.max(1));
        let mut cursor = 0usize;
        let max_pivots = 400usize.saturating_mul(m).saturating_add(1_000_000);
        let mut pivots = 0usize;
        loop {
            // Candidate block search: scan blocks starting at the cursor,
            // take the most negative reduced cost found in the first block
            // that has one.
            let mut best: Option<(usize, Cost2)> = None;
            let mut scanned = 0usize;
            while scanned < m {
                let take = block.min(m - scanned);
                for k in 0..take {
                    let a = (cursor + scanned + k) % m;
                    if self.in_tree[a] {
                        continue;
                    }
                    let r = self.reduced(a);
                    if r.is_negative(self.tol) {
                        match &best {
                            Some((_, rb)) if !r.less_than(rb) => {}
                            _ => best = Some((a, r)),
                        }
                    }
                }
                scanned += take;
                if best.is_some() {
                    break;
                }
            }
            match best {
                None => break, // optimal
                Some((a, _)) => {
                    cursor = (a + 1) % m;
                    self.pivot(a);
                    pivots += 1;
                    if pivots % 16384 == 0 {
                        // Periodic exact potential refresh.
                        self.refresh_tree();
                    }
                    assert!(pivots < max_pivots, "network simplex failed to terminate");
                }
            }
        }
    }
}

impl FlowProblem {
    pub fn solve(mut self) -> FlowSolution {
        let n = self.n;
        assert!(n > 0);
        // Force exact supply balance by folding the rounding residual into
        // the largest-magnitude supply.
        let residual: f64 = self.supply.iter().sum();
        if residual != 0.0 {
            let k = (0..n)
                .max_by(|&a, &b| {
                    self.supply[a]
                        .abs()
                        .partial_cmp(&self.supply[b].abs())
                        .unwrap()
                })
                .unwrap();
            self.supply[k] -= residual;
        }

        let mut sx = match self.basis {
            InitialBasis::Artificial => {
                let root = n;
                let n_nodes = n + 1; // incl. root
                let n_real_arcs = self.arcs.len();
                let mut arcs = self.arcs;
                let mut flow = vec![0.0; n_real_arcs];
                let mut in_tree = vec![false; n_real_arcs];
                let mut parent = vec![0u32; n_nodes];
                let mut pred_arc = vec![0u32; n_nodes];
                let mut children = vec![Vec::new(); n_nodes];
                for i in 0..n {
                    let arc_id = (n_real_arcs + i) as u32;
                    if self.supply[i] >= 0.0 {
                        arcs.push((i as u32, root as u32));
                    } else {
                        arcs.push((root as u32, i as u32));
                    }
                    flow.push(self.supply[i].abs());
                    in_tree.push(true);
                    parent[i] = root as u32;
                    pred_arc[i] = arc_id;
                    children[root].push(i as u32);
                }
                parent[root] = root as u32;
                Simplex {
                    root,
                    n_real_arcs,
                    arcs,
                    costs: self.costs,
                    flow,
                    in_tree,
                    parent,
                    pred_arc,
                    depth: vec![0; n_nodes],
                    children,
                    pi: vec![Cost2::ZERO; n_nodes],
                    tol: 0.0,
                }
            }
            InitialBasis::Tree {
                root,
                up,
                down,
                parent,
            } => {
                // Spanning tree of real arcs: flows by subtree aggregation,
                // processing nodes furthest from the root first. Zero-flow
                // tree arcs take the upward orientation (strong feasibility).
                let n_real_arcs = self.arcs.len();
                let mut children = vec![Vec::new(); n];
                for x in 0..n {
                    if x != root {
                        children[parent[x] as usize].push(x as u32);
                    }
                }
                let mut order = Vec::with_capacity(n);
                order.push(root as u32);
                let mut head = 0;
                while head < order.len() {
                    let x = order[head] as usize;
                    head += 1;
                    order.extend_from_slice(&children[x]);
                }
                assert_eq!(order.len(), n, "initial basis is not a spanning tree");
                let mut subtree = self.supply.clone();
                let mut flow = vec![0.0; n_real_arcs];
                let mut in_tree = vec![false; n_real_arcs];
                let mut pred_arc = vec![0u32; n];
                for &xu in order.iter().rev() {
                    let x = xu as usize;
                    if x == root {
                        continue;
                    }
                    let s = subtree[x];
                    let arc = if s >= 0.0 { up[x] } else { down[x] };
                    assert_ne!(arc, u32::MAX, "missing tree arc direction");
                    flow[arc as usize] = s.abs();
                    in_tree[arc as usize] = true;
                    pred_arc[x] = arc;
                    subtree[parent[x] as usize] += s;
                }
                Simplex {
                    root,
                    n_real_arcs,
                    arcs: self.arcs,
                    costs: self.costs,
                    flow,
                    in_tree,
                    parent,
                    pred_arc,
                    depth: vec![0; n],
                    children,
                    pi: vec![Cost2::ZERO; n],
                    tol: 0.0,
                }
            }
        };

        let cost_scale = sx
            .costs
            .iter()
            .fold(0.0f64, |a, &c| a.max(c.abs()))
            .max(1.0);
        sx.tol = 1e-11 * cost_scale;
        sx.refresh_tree();
        sx.optimize();

        let cost = (0..sx.n_real_arcs)
            .map(|a| sx.flow[a] * sx.costs[a])
            .sum();
        let artificial_residual = (sx.n_real_arcs..sx.arcs.len())
            .map(|a| sx.flow[a])
            .fold(0.0f64, f64::max);
        FlowSolution {
            cost,
            artificial_residual,
        }
    }
}

// ---------------------------------------------------------------------------
// Metric front ends
// ---------------------------------------------------------------------------

fn masses_equal(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Exact Wasserstein-1 between equal-mass atom sets (Euclidean ground
/// metric), by network simplex on the complete bipartite transport network.
///
/// Errors on mass mismatch beyond `1e-12` or if the combined atom count
/// exceeds [`EXACT_SOLVER_ATOM_CAP`].
pub fn w1_exact(a: &AtomSet, b: &AtomSet) -> Result<f64> {
    let (ma, mb) = (a.total_mass(), b.total_mass());
    if !masses_equal(ma, mb, 1e-12) {
        return Err(Error::MassMismatch { lhs: ma, rhs: mb });
    }
    let a = a.pruned();
    let b = b.pruned();
    if a.len() + b.len() > EXACT_SOLVER_ATOM_CAP {
        return Err(Error::InvalidParameter(format!(
            "{} atoms exceed the exact solver cap {EXACT_SOLVER_ATOM_CAP}",
            a.len() + b.len()
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    let na = a.len();
    let nb = b.len();
    let n = na + nb;
    let mut supply = Vec::with_capacity(n);
    supply.extend_from_slice(&a.weights);
    supply.extend(b.weights.iter().map(|w| -w));
    let mut arcs = Vec::with_capacity(na * nb);
    let mut costs = Vec::with_capacity(na * nb);
    for (i, pa) in a.points.iter().enumerate() {
        for (j, pb) in b.points.iter().enumerate() {
            arcs.push((i as u32, (na + j) as u32));
            costs.push(pa.dist(pb));
        }
    }
    let sol = FlowProblem {
        n,
        arcs,
        costs,
        supply,
        basis: InitialBasis::Artificial,
    }
    .solve();
    debug_assert!(sol.artificial_residual < 1e-9);
    Ok(sol.cost)
}

/// Bounded-Lipschitz (flat) distance between atomic measures of possibly
/// different total mass: `sup { integral phi d(mu - nu) : Lip(phi) <= 1,
/// |phi| <= 1 }`. Exact for small inputs via the bipartite network with a
/// unit-cost void node; larger inputs are aggregated onto the
/// [`METRIC_GRID_N`] grid and solved on the grid graph.
pub fn bounded_lipschitz(a: &AtomSet, b: &AtomSet) -> f64 {
    let a = a.pruned();
    let b = b.pruned();
    if a.len() + b.len() <= EXACT_SOLVER_ATOM_CAP {
        bounded_lipschitz_exact(&a, &b)
    } else {
        let gs = GridSpec::unit(METRIC_GRID_N);
        let ca = aggregate_to_grid(&a, &gs);
        let cb = aggregate_to_grid(&b, &gs);
        grid_flow_distance(&ca, &cb, &gs, true)
    }
}

fn bounded_lipschitz_exact(a: &AtomSet, b: &AtomSet) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let na = a.len();
    let nb = b.len();
    let void = na + nb;
    let n = void + 1;
    let mut supply = Vec::with_capacity(n);
    supply.extend_from_slice(&a.weights);
    supply.extend(b.weights.iter().map(|w| -w));
    supply.push(b.total_mass() - a.total_mass());
    let mut arcs = Vec::new();
    let mut costs = Vec::new();
    for (i, pa) in a.points.iter().enumerate() {
        for (j, pb) in b.points.iter().enumerate() {
            arcs.push((i as u32, (na + j) as u32));
            costs.push(pa.dist(pb));
        }
    }
    // Mass disposal and creation at unit cost (the |phi| <= 1 constraint).
    // These arcs also make a star at the void node the natural starting
    // basis: a-atoms (positive supply) drain upward, b-atoms fill downward.
    let mut up = vec![u32::MAX; n];
    let mut down = vec![u32::MAX; n];
    for i in 0..na {
        up[i] = arcs.len() as u32;
        arcs.push((i as u32, void as u32));
        costs.push(1.0);
    }
    for j in 0..nb {
        down[na + j] = arcs.len() as u32;
        arcs.push((void as u32, (na + j) as u32));
        costs.push(1.0);
    }
    let parent = vec![void as u32; n];
    let sol = FlowProblem {
        n,
        arcs,
        costs,
        supply,
        basis: InitialBasis::Tree {
            root: void,
            up,
            down,
            parent,
        },
    }
    .solve();
    debug_assert!(sol.artificial_residual < 1e-9);
    sol.cost
}

/// Regular grid geometry used for aggregated transport.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub x0: f64,
    pub y0: f64,
}

impl GridSpec {
    /// `n x n` cells over the unit square.
    pub fn unit(n: usize) -> GridSpec {
        GridSpec {
            nx: n,
            ny: n,
            h: 1.0 / n as f64,
            x0: 0.0,
            y0: 0.0,
        }
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_of(&self, p: Point) -> usize {
        let ix = (((p.x - self.x0) / self.h) as isize).clamp(0, self.nx as isize - 1) as usize;
        let iy = (((p.y - self.y0) / self.h) as isize).clamp(0, self.ny as isize - 1) as usize;
        iy * self.nx + ix
    }
}

/// Cell masses of an atom set on a grid (atoms snap to their cell).
pub fn aggregate_to_grid(atoms: &AtomSet, gs: &GridSpec) -> Vec<f64> {
    let mut cells = vec![0.0; gs.cells()];
    for (p, w) in atoms.points.iter().zip(&atoms.weights) {
        cells[gs.cell_of(*p)] += w;
    }
    cells
}

/// Transport distance between two cell-mass vectors by min-cost flow on the
/// grid graph with axis and diagonal edges (Euclidean step costs). With
/// `allow_mass_change` a void node with unit-cost arcs is added, giving the
/// grid bounded-Lipschitz distance; without it masses must be equal and the
/// result is the grid Wasserstein-1 (octile ground metric, within ~8% above
/// Euclidean plus O(h) aggregation error).
pub fn grid_flow_distance(a: &[f64], b: &[f64], gs: &GridSpec, allow_mass_change: bool) -> f64 {
    assert_eq!(a.len(), gs.cells());
    assert_eq!(b.len(), gs.cells());
    let cells = gs.cells();
    let n = if allow_mass_change { cells + 1 } else { cells };
    let mut supply: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if allow_mass_change {
        let net: f64 = supply.iter().sum();
        supply.push(-net);
    }
    let mut arcs = Vec::new();
    let mut costs = Vec::new();
    // Per-cell neighbour list carrying (neighbour, arc there, arc back) so
    // a BFS spanning tree can be assembled below.
    let mut adjacency: Vec<Vec<(u32, u32, u32)>> = vec![Vec::new(); cells];
    let diag = gs.h * std::f64::consts::SQRT_2;
    let mut push_edge = |u: usize,
                         v: usize,
                         c: f64,
                         arcs: &mut Vec<(u32, u32)>,
                         costs: &mut Vec<f64>,
                         adjacency: &mut Vec<Vec<(u32, u32, u32)>>| {
        let fwd = arcs.len() as u32;
        arcs.push((u as u32, v as u32));
        costs.push(c);
        let back = arcs.len() as u32;
        arcs.push((v as u32, u as u32));
        costs.push(c);
        adjacency[u].push((v as u32, fwd, back));
        adjacency[v].push((u as u32, back, fwd));
    };
    for iy in 0..gs.ny {
        for ix in 0..gs.nx {
            let c = iy * gs.nx + ix;
            if ix + 1 < gs.nx {
                push_edge(c, c + 1, gs.h, &mut arcs, &mut costs, &mut adjacency);
            }
            if iy + 1 < gs.ny {
                push_edge(c, c + gs.nx, gs.h, &mut arcs, &mut costs, &mut adjacency);
                if ix + 1 < gs.nx {
                    push_edge(c, c + gs.nx + 1, diag, &mut arcs, &mut costs, &mut adjacency);
                }
                if ix > 0 {
                    push_edge(c, c + gs.nx - 1, diag, &mut arcs, &mut costs, &mut adjacency);
                }
            }
        }
    }
    let basis = if allow_mass_change {
        // Star at the void node: disposal arcs exist in both directions for
        // every cell, so they form the starting tree directly.
        let void = cells;
        let mut up = vec![u32::MAX; n];
        let mut down = vec![u32::MAX; n];
        for c in 0..cells {
            up[c] = arcs.len() as u32;
            arcs.push((c as u32, void as u32));
            costs.push(1.0);
            down[c] = arcs.len() as u32;
            arcs.push((void as u32, c as u32));
            costs.push(1.0);
        }
        InitialBasis::Tree {
            root: void,
            up,
            down,
            parent: vec![void as u32; n],
        }
    } else {
        // Equal masses: BFS spanning tree of grid edges rooted near the
        // centre (shallow, so pivot path walks stay short).
        let root = (gs.ny / 2) * gs.nx + gs.nx / 2;
        let mut up = vec![u32::MAX; n];
        let mut down = vec![u32::MAX; n];
        let mut parent = vec![u32::MAX; n];
        parent[root] = root as u32;
        let mut queue = std::collections::VecDeque::from([root as u32]);
        let mut seen = 0usize;
        while let Some(x) = queue.pop_front() {
            seen += 1;
            for &(y, fwd, back) in &adjacency[x as usize] {
                if parent[y as usize] == u32::MAX {
                    parent[y as usize] = x;
                    up[y as usize] = back; // y -> x
                    down[y as usize] = fwd; // x -> y
                    queue.push_back(y);
                }
            }
        }
        assert_eq!(seen, cells, "grid graph must be connected");
        InitialBasis::Tree {
            root,
            up,
            down,
            parent,
        }
    };
    let sol = FlowProblem {
        n,
        arcs,
        costs,
        supply,
        basis,
    }
    .solve();
    debug_assert!(sol.artificial_residual < 1e-9);
    sol.cost
}

/// Componentwise bounded-Lipschitz distance through the grid route for
/// every component, summed. Convergence sweeps use this so the metric is
/// identical across population sizes (no method switching mid-sweep).
pub fn bl_grid_triple(a: &[AtomSet; 3], b: &[AtomSet; 3], grid_n: usize) -> f64 {
    let gs = GridSpec::unit(grid_n);
    (0..3)
        .map(|c| {
            let ca = aggregate_to_grid(&a[c], &gs);
            let cb = aggregate_to_grid(&b[c], &gs);
            grid_flow_distance(&ca, &cb, &gs, true)
        })
        .sum()
}

/// Which route a componentwise distance took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMethod {
    W1Exact,
    W1Grid,
    BlExact,
    BlGrid,
}

/// Componentwise transport distance over the three compartments.
#[derive(Debug, Clone)]
pub struct TripleDistance {
    pub components: [f64; 3],
    pub methods: [DistanceMethod; 3],
}

impl TripleDistance {
    pub fn total(&self) -> f64 {
        self.components.iter().sum()
    }
}

/// Componentwise distance, summed over compartments. Components with equal
/// masses (within `1e-9`) use Wasserstein-1 (exact if the atom count allows,
/// grid-aggregated otherwise); unequal masses fall back to the
/// bounded-Lipschitz distance.
pub fn w1_triple(a: &[AtomSet; 3], b: &[AtomSet; 3]) -> TripleDistance {
    let mut components = [0.0; 3];
    let mut methods = [DistanceMethod::W1Exact; 3];
    for c in 0..3 {
        let (set_a, set_b) = (&a[c], &b[c]);
        let (ma, mb) = (set_a.total_mass(), set_b.total_mass());
        if masses_equal(ma, mb, 1e-9) {
            if ma.max(mb) == 0.0 {
                components[c] = 0.0;
                methods[c] = DistanceMethod::W1Exact;
            } else if set_a.len() + set_b.len() <= EXACT_SOLVER_ATOM_CAP {
                // Equalise the tiny mass residual before the exact solve.
                let mut bb = set_b.clone();
                if let Some(k) = (0..bb.len()).max_by(|&x, &y| {
                    bb.weights[x].partial_cmp(&bb.weights[y]).unwrap()
                }) {
                    bb.weights[k] += ma - mb;
                }
                components[c] = w1_exact(set_a, &bb).expect("equalised masses");
                methods[c] = DistanceMethod::W1Exact;
            } else {
                let gs = GridSpec::unit(METRIC_GRID_N);
                let mut ca = aggregate_to_grid(set_a, &gs);
                let cb = aggregate_to_grid(set_b, &gs);
                // Fold the residual into the largest cell.
                let residual: f64 = ca.iter().sum::<f64>() - cb.iter().sum::<f64>();
                if let Some(k) = (0..ca.len())
                    .max_by(|&x, &y| ca[x].partial_cmp(&ca[y]).unwrap())
                {
                    ca[k] -= residual;
                }
                components[c] = grid_flow_distance(&ca, &cb, &gs, false);
                methods[c] = DistanceMethod::W1Grid;
            }
        } else if set_a.len() + set_b.len() <= EXACT_SOLVER_ATOM_CAP {
            components[c] = bounded_lipschitz_exact(&set_a.pruned(), &set_b.pruned());
            methods[c] = DistanceMethod::BlExact;
        } else {
            let gs = GridSpec::unit(METRIC_GRID_N);
            let ca = aggregate_to_grid(set_a, &gs);
            let cb = aggregate_to_grid(set_b, &gs);
            components[c] = grid_flow_distance(&ca, &cb, &gs, true);
            methods[c] = DistanceMethod::BlGrid;
        }
    }
    TripleDistance {
        components,
        methods,
    }
}
