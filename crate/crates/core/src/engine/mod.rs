//! Exact event-driven simulation of the infection/recovery Markov chain.
//!
//! Direct-method stepping: total rate `R = p n_I + sum_i lambda_i`,
//! exponential waiting times, two-level event selection (recovery block vs
//! infection block, then a uniform pick among infected or a Fenwick-tree
//! weighted pick among susceptibles). All pressures are maintained
//! incrementally; the Fenwick tree is rebuilt from the authoritative table
//! every few thousand events to wash out floating-point drift.

mod fenwick;
mod martingale;

pub use martingale::{martingale_path, MartingaleDiagnostic, TestFn, TestTriple};

use crate::cells::{build_spatial_index, recompute_pressure, SpatialIndex};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::model::{HealthState, ModelParams, PopulationState, PressureTable};
use crate::rng::{make_rng, SimRng};
use fenwick::Fenwick;
use rand::Rng;

/// Events between exact Fenwick rebuilds.
const REBUILD_INTERVAL: u32 = 4096;

/// A single transition of the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// A susceptible individual becomes infected.
    Infection(u32),
    /// An infected individual is removed.
    Recovery(u32),
}

impl EventKind {
    pub fn individual(&self) -> u32 {
        match self {
            EventKind::Infection(i) | EventKind::Recovery(i) => *i,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Infection(_) => "infection",
            EventKind::Recovery(_) => "recovery",
        }
    }
}

/// Compact record of the population's states at one snapshot time
/// (positions are fixed, so states fully determine the empirical measure).
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub states: Vec<HealthState>,
}

/// A complete simulated path: initial state, ordered event log, and the
/// cadlag snapshots (state just after the last event at or before each
/// requested time).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub initial: PopulationState,
    pub events: Vec<Event>,
    pub snapshots: Vec<Snapshot>,
    pub horizon: f64,
}

impl Trajectory {
    /// States obtained by replaying the event log up to and including
    /// time `t`.
    pub fn replay_states(&self, t: f64) -> Vec<HealthState> {
        let mut states: Vec<HealthState> =
            self.initial.individuals.iter().map(|i| i.state).collect();
        for ev in &self.events {
            if ev.time > t {
                break;
            }
            apply_to_states(&mut states, ev.kind);
        }
        states
    }

    /// Replay the whole log, checking transition legality, strictly
    /// increasing event times, and exact conservation of the population
    /// count after every event. Returns the number of events checked.
    pub fn replay_validate(&self) -> Result<usize> {
        let n = self.initial.len();
        let mut states: Vec<HealthState> =
            self.initial.individuals.iter().map(|i| i.state).collect();
        let mut counts = self.initial.counts();
        let mut prev_t = f64::NEG_INFINITY;
        for (k, ev) in self.events.iter().enumerate() {
            if ev.time <= prev_t {
                return Err(Error::Numerical {
                    what: format!("event {k} time not increasing"),
                    t: ev.time,
                });
            }
            prev_t = ev.time;
            let i = ev.kind.individual() as usize;
            let (from, to) = match ev.kind {
                EventKind::Infection(_) => (HealthState::S, HealthState::I),
                EventKind::Recovery(_) => (HealthState::I, HealthState::R),
            };
            if states[i] != from {
                return Err(Error::Numerical {
                    what: format!("event {k} applied to individual in state {}", states[i]),
                    t: ev.time,
                });
            }
            states[i] = to;
            counts[from.index()] -= 1;
            counts[to.index()] += 1;
            if counts[0] + counts[1] + counts[2] != n {
                return Err(Error::Numerical {
                    what: format!("population count broken after event {k}"),
                    t: ev.time,
                });
            }
        }
        Ok(self.events.len())
    }

    /// Event log as CSV with columns `time,kind,individual,x,y`.
    pub fn write_events_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "time,kind,individual,x,y")?;
        for ev in &self.events {
            let i = ev.kind.individual() as usize;
            let p = self.initial.individuals[i].position;
            writeln!(
                w,
                "{},{},{},{},{}",
                ev.time,
                ev.kind.label(),
                i,
                p.x,
                p.y
            )?;
        }
        Ok(())
    }
}

fn apply_to_states(states: &mut [HealthState], kind: EventKind) {
    let i = kind.individual() as usize;
    states[i] = match kind {
        EventKind::Infection(_) => HealthState::I,
        EventKind::Recovery(_) => HealthState::R,
    };
}

/// Constant-time set of individual indices supporting uniform sampling
/// and swap removal.
#[derive(Debug, Clone)]
struct SlotSet {
    items: Vec<u32>,
    pos: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl SlotSet {
    fn with_capacity(n: usize) -> Self {
        SlotSet {
            items: Vec::with_capacity(n),
            pos: vec![ABSENT; n],
        }
    }

    fn insert(&mut self, i: u32) {
        debug_assert_eq!(self.pos[i as usize], ABSENT);
        self.pos[i as usize] = self.items.len() as u32;
        self.items.push(i);
    }

    fn remove(&mut self, i: u32) {
        let p = self.pos[i as usize];
        debug_assert_ne!(p, ABSENT);
        let last = *self.items.last().unwrap();
        self.items[p as usize] = last;
        self.pos[last as usize] = p;
        self.items.pop();
        self.pos[i as usize] = ABSENT;
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn get(&self, k: usize) -> u32 {
        self.items[k]
    }

    fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.items.iter().copied()
    }
}

/// Shared incremental-rate machinery: applies transitions to a population
/// and keeps the pressure table consistent. Used by the live engine and by
/// deterministic replays (martingale diagnostics).
pub(crate) struct RateDynamics {
    pub(crate) spec: KernelSpec,
    pub(crate) index: Option<SpatialIndex>,
    /// Constant mean-field kernels keep a single shared pressure value.
    uniform_rate: Option<f64>, // (q/N) * T for the constant kernel
    fenwick: Option<Fenwick>,
    events_since_rebuild: u32,
}

impl RateDynamics {
    /// Bind a kernel to the population: builds the cell list (local regime)
    /// and fills the pressure table by a full from-scratch computation.
    pub(crate) fn bind(
        pop: &mut PopulationState,
        params: &ModelParams,
        with_fenwick: bool,
    ) -> Result<Self> {
        let n = pop.len();
        let spec = KernelSpec::for_run(params, n)?;
        let index = if spec.is_local() {
            Some(build_spatial_index(pop, &spec)?)
        } else {
            None
        };
        pop.pressure = recompute_pressure(pop, params, &spec, index.as_ref());
        let uniform_rate = match &spec {
            KernelSpec::MeanField { t, q, n } if t.is_constant() => {
                Some(q / *n as f64 * t.sup())
            }
            _ => None,
        };
        let fenwick = if with_fenwick && uniform_rate.is_none() {
            let mut f = Fenwick::new(n);
            if let PressureTable::PerIndividual(v) = &pop.pressure {
                f.rebuild_from(v);
            }
            Some(f)
        } else {
            None
        };
        Ok(RateDynamics {
            spec,
            index,
            uniform_rate,
            fenwick,
            events_since_rebuild: 0,
        })
    }

    /// Total infection rate over all susceptibles.
    fn infection_total(&self, pop: &PopulationState) -> f64 {
        match (&pop.pressure, &self.fenwick) {
            (PressureTable::Uniform { per_susceptible }, _) => {
                per_susceptible * pop.n_susceptible() as f64
            }
            (PressureTable::PerIndividual(_), Some(f)) => f.total(),
            (PressureTable::PerIndividual(v), None) => pop
                .individuals
                .iter()
                .enumerate()
                .filter(|(_, ind)| ind.state == HealthState::S)
                .map(|(i, _)| v[i])
                .sum(),
        }
    }

    /// Apply an infection, updating states, counts, and pressures.
    /// `hook(k, delta)` is invoked for every susceptible `k` whose tabled
    /// pressure changes by `delta` (never called in uniform mode).
    pub(crate) fn apply_infection<F: FnMut(usize, f64)>(
        &mut self,
        pop: &mut PopulationState,
        i: usize,
        mut hook: F,
    ) {
        pop.transition(i, HealthState::S, HealthState::I);
        if let Some(rate) = self.uniform_rate {
            pop.pressure = PressureTable::Uniform {
                per_susceptible: rate * pop.n_infected() as f64,
            };
            return;
        }
        let xi = pop.individuals[i].position;
        // Clear the newly infected individual's own slot.
        if let PressureTable::PerIndividual(v) = &mut pop.pressure {
            let old = v[i];
            v[i] = 0.0;
            if let Some(f) = &mut self.fenwick {
                f.add(i, -old);
            }
        }
        self.scatter(pop, xi, 1.0, &mut hook);
        self.maybe_rebuild(pop);
    }

    /// Apply a recovery; pressure contributions of the recovered individual
    /// are subtracted from its susceptible neighbours.
    pub(crate) fn apply_recovery<F: FnMut(usize, f64)>(
        &mut self,
        pop: &mut PopulationState,
        j: usize,
        mut hook: F,
    ) {
        pop.transition(j, HealthState::I, HealthState::R);
        if let Some(rate) = self.uniform_rate {
            pop.pressure = PressureTable::Uniform {
                per_susceptible: rate * pop.n_infected() as f64,
            };
            return;
        }
        let xj = pop.individuals[j].position;
        self.scatter(pop, xj, -1.0, &mut hook);
        if pop.n_infected() == 0 {
            // Absorbing state: snap all residual drift to exact zero.
            self.zero_pressures(pop, &mut hook);
        }
        self.maybe_rebuild(pop);
    }

    /// Add `sign * tau(k, source)` to every susceptible `k` in range of
    /// `source`. Local kernels scan the 3x3 cell neighbourhood; general
    /// mean-field kernels scan every individual (documented O(N) cost).
    fn scatter<F: FnMut(usize, f64)>(
        &mut self,
        pop: &mut PopulationState,
        source: crate::geom::Point,
        sign: f64,
        hook: &mut F,
    ) {
        let spec = &self.spec;
        let PressureTable::PerIndividual(v) = &mut pop.pressure else {
            unreachable!("scatter called in uniform mode");
        };
        let fenwick = &mut self.fenwick;
        let individuals = &pop.individuals;
        let mut touch = |k: usize, delta: f64| {
            v[k] += delta;
            if let Some(f) = fenwick {
                f.add(k, delta);
            }
            hook(k, delta);
        };
        match &self.index {
            Some(index) => index.grid().for_neighborhood(source, |k| {
                let k = k as usize;
                if individuals[k].state == HealthState::S {
                    let tau = spec.eval_tau(individuals[k].position, source);
                    if tau != 0.0 {
                        touch(k, sign * tau);
                    }
                }
            }),
            None => {
                for (k, ind) in individuals.iter().enumerate() {
                    if ind.state == HealthState::S {
                        touch(k, sign * spec.eval_tau(ind.position, source));
                    }
                }
            }
        }
    }

    fn zero_pressures<F: FnMut(usize, f64)>(&mut self, pop: &mut PopulationState, hook: &mut F) {
        let PressureTable::PerIndividual(v) = &mut pop.pressure else {
            return;
        };
        for (k, ind) in pop.individuals.iter().enumerate() {
            if ind.state == HealthState::S && v[k] != 0.0 {
                let delta = -v[k];
                v[k] = 0.0;
                hook(k, delta);
            }
        }
        if let Some(f) = &mut self.fenwick {
            f.rebuild_from(v);
        }
    }

    fn maybe_rebuild(&mut self, pop: &PopulationState) {
        self.events_since_rebuild += 1;
        if self.events_since_rebuild >= REBUILD_INTERVAL {
            if let (Some(f), PressureTable::PerIndividual(v)) = (&mut self.fenwick, &pop.pressure)
            {
                f.rebuild_from(v);
            }
            self.events_since_rebuild = 0;
        }
    }
}

/// Live simulation engine: owns the population, the rate machinery, the
/// RNG, and the index sets used for event selection.
pub struct Engine {
    pop: PopulationState,
    params: ModelParams,
    dynamics: RateDynamics,
    infected: SlotSet,
    susceptible: SlotSet,
    rng: SimRng,
    fallback_selections: u64,
}

impl Engine {
    pub fn new(pop: PopulationState, params: &ModelParams, seed: u64) -> Result<Engine> {
        let mut pop = pop;
        if pop.is_empty() {
            return Err(Error::InvalidParameter("empty population".into()));
        }
        let dynamics = RateDynamics::bind(&mut pop, params, true)?;
        let mut infected = SlotSet::with_capacity(pop.len());
        let mut susceptible = SlotSet::with_capacity(pop.len());
        for (i, ind) in pop.individuals.iter().enumerate() {
            match ind.state {
                HealthState::S => susceptible.insert(i as u32),
                HealthState::I => infected.insert(i as u32),
                HealthState::R => {}
            }
        }
        Ok(Engine {
            pop,
            params: params.clone(),
            dynamics,
            infected,
            susceptible,
            rng: make_rng(seed),
            fallback_selections: 0,
        })
    }

    pub fn population(&self) -> &PopulationState {
        &self.pop
    }

    pub fn clock(&self) -> f64 {
        self.pop.clock
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.dynamics.spec
    }

    /// Number of times weighted selection had to fall back to a rebuild
    /// (floating-point drift pathologies; expected to stay at zero).
    pub fn fallback_selections(&self) -> u64 {
        self.fallback_selections
    }

    /// Maintained total event rate `p n_I + sum lambda_i`.
    pub fn total_rate(&self) -> f64 {
        self.params.p * self.pop.n_infected() as f64
            + self.dynamics.infection_total(&self.pop)
    }

    /// From-scratch total rate (oracle for the maintained one).
    pub fn recompute_total_rate(&self) -> f64 {
        let mut pop = self.pop.clone();
        pop.pressure = recompute_pressure(
            &pop,
            &self.params,
            &self.dynamics.spec,
            self.dynamics.index.as_ref(),
        );
        pop.total_event_rate(&self.params)
    }

    /// Draw the waiting time to the next event given total rate `r`.
    fn draw_wait(&mut self, r: f64) -> f64 {
        let u: f64 = self.rng.random();
        let wait = -(-u).ln_1p() / r; // -ln(1 - u), u in [0, 1)
        if wait > 0.0 {
            wait
        } else {
            f64::MIN_POSITIVE
        }
    }

    /// Select and apply the next event, setting the clock to `time`.
    fn apply_event_at(&mut self, time: f64) -> Event {
        let r_rec = self.params.p * self.pop.n_infected() as f64;
        let r_tot = self.total_rate();
        let v: f64 = self.rng.random::<f64>() * r_tot;
        self.pop.clock = time;
        let kind = if v < r_rec {
            let k = self.rng.random_range(0..self.infected.len());
            let j = self.infected.get(k);
            self.infected.remove(j);
            self.dynamics
                .apply_recovery(&mut self.pop, j as usize, |_, _| {});
            EventKind::Recovery(j)
        } else {
            let i = self.select_susceptible(v - r_rec);
            self.susceptible.remove(i);
            self.dynamics
                .apply_infection(&mut self.pop, i as usize, |_, _| {});
            self.infected.insert(i);
            EventKind::Infection(i)
        };
        Event { time, kind }
    }

    /// Weighted pick among susceptibles with target mass `target` within
    /// the infection block.
    fn select_susceptible(&mut self, target: f64) -> u32 {
        match &self.pop.pressure {
            PressureTable::Uniform { per_susceptible } => {
                let k = ((target / per_susceptible) as usize).min(self.susceptible.len() - 1);
                self.susceptible.get(k)
            }
            PressureTable::PerIndividual(v) => {
                let f = self.dynamics.fenwick.as_mut().expect("fenwick in table mode");
                let cand = f.find(target);
                if self.pop.individuals[cand].state == HealthState::S && v[cand] > 0.0 {
                    return cand as u32;
                }
                // Drift pathology: rebuild and retry, then fall back to the
                // susceptible with the largest pressure.
                self.fallback_selections += 1;
                f.rebuild_from(v);
                let total = f.total();
                let cand = f.find(target.min(total * (1.0 - 1e-15)));
                if self.pop.individuals[cand].state == HealthState::S && v[cand] > 0.0 {
                    return cand as u32;
                }
                self.susceptible
                    .iter()
                    .max_by(|&a, &b| {
                        v[a as usize]
                            .partial_cmp(&v[b as usize])
                            .expect("pressure NaN")
                    })
                    .expect("no susceptible individual to infect")
            }
        }
    }

    /// One exact Gillespie step: `None` once the chain is absorbed
    /// (total rate zero).
    pub fn step(&mut self) -> Option<Event> {
        let r_tot = self.total_rate();
        if r_tot <= 0.0 {
            return None;
        }
        let wait = self.draw_wait(r_tot);
        let time = self.pop.clock + wait;
        Some(self.apply_event_at(time))
    }
}

/// Simulate the chain from `pop0` up to the parameter horizon, capturing
/// cadlag snapshots at the requested times. Deterministic in
/// `(pop0, params, snapshot_times, seed)`.
pub fn simulate(
    pop0: &PopulationState,
    params: &ModelParams,
    snapshot_times: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    let horizon = params.horizon;
    if snapshot_times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter(
            "snapshot times must be sorted".into(),
        ));
    }
    if snapshot_times.iter().any(|&t| t < 0.0 || t > horizon) {
        return Err(Error::InvalidParameter(
            "snapshot times must lie in [0, horizon]".into(),
        ));
    }
    let mut engine = Engine::new(pop0.clone(), params, seed)?;
    let initial = engine.population().clone();
    let mut events = Vec::new();
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    let mut next_snap = 0;

    let capture_through =
        |upto: f64, pop: &PopulationState, next: &mut usize, snaps: &mut Vec<Snapshot>| {
            while *next < snapshot_times.len() && snapshot_times[*next] < upto {
                snaps.push(Snapshot {
                    t: snapshot_times[*next],
                    states: pop.individuals.iter().map(|i| i.state).collect(),
                });
                *next += 1;
            }
        };

    loop {
        let r_tot = engine.total_rate();
        if r_tot <= 0.0 {
            break;
        }
        let wait = engine.draw_wait(r_tot);
        let t_next = engine.clock() + wait;
        capture_through(
            t_next.min(horizon),
            engine.population(),
            &mut next_snap,
            &mut snapshots,
        );
        if t_next > horizon {
            break;
        }
        events.push(engine.apply_event_at(t_next));
    }
    // Remaining snapshots see the final (absorbed or horizon) state.
    capture_through(
        f64::INFINITY,
        engine.population(),
        &mut next_snap,
        &mut snapshots,
    );
    Ok(Trajectory {
        initial,
        events,
        snapshots,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::MeanFieldKernel;
    use crate::model::{sample_initial_population, InitialDistribution, Regime};

    fn meanfield_params(p: f64, q: f64, horizon: f64) -> ModelParams {
        ModelParams::new(
            p,
            q,
            horizon,
            Regime::MeanField(MeanFieldKernel::Constant { value: 1.0 }),
        )
        .unwrap()
    }

    #[test]
    fn all_removed_is_absorbed() {
        let dist = InitialDistribution::uniform_mix(0.0, 0.0, 1.0).unwrap();
        let pop = sample_initial_population(&dist, 30, 1).unwrap();
        let mut engine = Engine::new(pop, &meanfield_params(0.5, 1.0, 1.0), 2).unwrap();
        assert_eq!(engine.total_rate(), 0.0);
        assert!(engine.step().is_none());
    }

    #[test]
    fn recovery_block_rate_is_linear() {
        // p = 0.5, three infected, no susceptibles: total rate 1.5.
        let dist = InitialDistribution::uniform_mix(0.0, 1.0, 0.0).unwrap();
        let mut pop = sample_initial_population(&dist, 3, 1).unwrap();
        pop.pressure = PressureTable::PerIndividual(vec![0.0; 3]);
        let engine = Engine::new(pop, &meanfield_params(0.5, 2.0, 1.0), 2).unwrap();
        assert!((engine.total_rate() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn all_susceptible_never_moves() {
        let dist = InitialDistribution::uniform_mix(1.0, 0.0, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 40, 9).unwrap();
        let params = meanfield_params(1.0, 3.0, 5.0);
        let traj = simulate(&pop, &params, &[0.0, 2.5, 5.0], 17).unwrap();
        assert!(traj.events.is_empty());
        for snap in &traj.snapshots {
            assert!(snap.states.iter().all(|&s| s == HealthState::S));
        }
    }

    #[test]
    fn all_infected_all_recover() {
        let dist = InitialDistribution::uniform_mix(0.0, 1.0, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 25, 3).unwrap();
        let params = meanfield_params(1.0, 0.0, 1e6);
        let traj = simulate(&pop, &params, &[], 5).unwrap();
        assert_eq!(traj.events.len(), 25);
        assert!(traj
            .events
            .iter()
            .all(|e| matches!(e.kind, EventKind::Recovery(_))));
        let final_states = traj.replay_states(f64::INFINITY);
        assert!(final_states.iter().all(|&s| s == HealthState::R));
    }

    #[test]
    fn single_infected_waiting_time_mean() {
        // One infected with q = 0: the only event is its recovery, time
        // Exponential(p). Over many replicas the sample mean must sit
        // within three standard errors of 1/p.
        let dist = InitialDistribution::uniform_mix(0.0, 1.0, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 1, 7).unwrap();
        let p = 2.0;
        let params = meanfield_params(p, 0.0, 1e9);
        let replicas = 10_000;
        let mut sum = 0.0;
        for r in 0..replicas {
            let traj = simulate(&pop, &params, &[], crate::rng::replica_seed(42, r)).unwrap();
            assert_eq!(traj.events.len(), 1);
            sum += traj.events[0].time;
        }
        let mean = sum / replicas as f64;
        let expect = 1.0 / p;
        let stderr = expect / (replicas as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * stderr,
            "mean {mean}, expected {expect} +- {stderr}"
        );
    }

    #[test]
    fn determinism_and_replay() {
        let dist = InitialDistribution::uniform_mix(0.85, 0.15, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 300, 11).unwrap();
        let params = ModelParams::new(1.0, 2.0, 2.0, Regime::local(0.25)).unwrap();
        let a = simulate(&pop, &params, &[0.5, 1.0, 2.0], 77).unwrap();
        let b = simulate(&pop, &params, &[0.5, 1.0, 2.0], 77).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.replay_validate().unwrap(), a.events.len());
        // Replay reproduces every snapshot exactly.
        for snap in &a.snapshots {
            assert_eq!(snap.states, a.replay_states(snap.t));
        }
    }

    #[test]
    fn monotone_compartments() {
        let dist = InitialDistribution::uniform_mix(0.8, 0.2, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 200, 13).unwrap();
        let params = meanfield_params(1.0, 3.0, 4.0);
        let traj = simulate(&pop, &params, &[], 5).unwrap();
        let mut counts = traj.initial.counts();
        for ev in &traj.events {
            let before = counts;
            match ev.kind {
                EventKind::Infection(_) => {
                    counts[0] -= 1;
                    counts[1] += 1;
                }
                EventKind::Recovery(_) => {
                    counts[1] -= 1;
                    counts[2] += 1;
                }
            }
            assert!(counts[0] <= before[0], "n_S must be non-increasing");
            assert!(counts[2] >= before[2], "n_R must be non-decreasing");
        }
    }

    #[test]
    fn incremental_pressure_matches_recompute_after_run() {
        let dist = InitialDistribution::uniform_mix(0.7, 0.3, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 300, 19).unwrap();
        let params = ModelParams::new(1.0, 2.0, 1e9, Regime::local(0.25)).unwrap();
        let mut engine = Engine::new(pop, &params, 23).unwrap();
        for _ in 0..500 {
            if engine.step().is_none() {
                break;
            }
        }
        let maintained = engine.total_rate();
        let oracle = engine.recompute_total_rate();
        assert!(
            (maintained - oracle).abs() <= 1e-9 * oracle.max(1.0),
            "{maintained} vs {oracle}"
        );
        // Per-individual table agrees with brute force too.
        let pop = engine.population();
        let spec = engine.kernel().clone();
        if let PressureTable::PerIndividual(v) = &pop.pressure {
            for (i, ind) in pop.individuals.iter().enumerate() {
                if ind.state == HealthState::S {
                    let brute = crate::cells::infection_pressure_brute(pop, &spec, i);
                    assert!(
                        (v[i] - brute).abs() <= 1e-9,
                        "lambda_{i}: {} vs {brute}",
                        v[i]
                    );
                }
            }
        } else {
            panic!("expected per-individual table in local regime");
        }
        assert_eq!(engine.fallback_selections(), 0);
    }

    #[test]
    fn absorption_reaches_zero_infected() {
        let dist = InitialDistribution::uniform_mix(0.6, 0.4, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 120, 29).unwrap();
        let params = meanfield_params(1.0, 2.0, 1e9);
        let mut engine = Engine::new(pop, &params, 31).unwrap();
        let mut steps = 0u32;
        while engine.step().is_some() {
            steps += 1;
            assert!(steps < 10_000, "chain failed to absorb");
        }
        assert_eq!(engine.population().n_infected(), 0);
        assert_eq!(engine.total_rate(), 0.0);
    }
}
