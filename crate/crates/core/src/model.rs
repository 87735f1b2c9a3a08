//! Core domain types: health states, individuals, model parameters,
//! initial distributions, and population sampling.

use crate::error::{Error, Result};
use crate::geom::{Point, DOMAIN_SIDE};
use crate::kernel::MeanFieldKernel;
use crate::rng::{make_rng, SimRng};
use rand::Rng;

/// Retry bound for rejection sampling of a single point. Exceeding it means
/// the declared density maximum is wrong.
const REJECTION_CAP: u64 = 1_000_000;

/// Health state of one individual. The ordering `S < I < R` is fixed and
/// used for deterministic serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum HealthState {
    S = 0,
    I = 1,
    R = 2,
}

impl HealthState {
    pub const ALL: [HealthState; 3] = [HealthState::S, HealthState::I, HealthState::R];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_char(self) -> char {
        match self {
            HealthState::S => 'S',
            HealthState::I => 'I',
            HealthState::R => 'R',
        }
    }
}

impl std::fmt::Display for HealthState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// One individual: a fixed position in `D` and a mutable health state.
/// Positions never change over the lifetime of a run.
#[derive(Debug, Clone, Copy)]
pub struct Individual {
    pub position: Point,
    pub state: HealthState,
}

/// Interaction regime selecting which scaling of the contact kernel is used.
#[derive(Debug, Clone, PartialEq)]
pub enum Regime {
    /// Weak all-to-all interaction through a bounded kernel `T(x, y)`.
    MeanField(MeanFieldKernel),
    /// Shrinking-support interaction; `beta` must lie in `(0, 1/3)`.
    /// `exponent_divisor` is the `d` in the kernel rescaling `N^(beta/d)`;
    /// it defaults to 2 (the space dimension) and is exposed only for
    /// sensitivity checks.
    Local { beta: f64, exponent_divisor: f64 },
}

impl Regime {
    pub fn local(beta: f64) -> Self {
        Regime::Local {
            beta,
            exponent_divisor: 2.0,
        }
    }
}

/// Rates and horizon of the dynamics.
///
/// `p` is the recovery rate, `q` the contact-rate scale (both 1/time),
/// `horizon` the simulation end time.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub p: f64,
    pub q: f64,
    pub horizon: f64,
    pub regime: Regime,
}

impl ModelParams {
    /// Validate and build. Rates must be finite and non-negative (zero rates
    /// are allowed so that pure-sampling experiments can switch the dynamics
    /// off); the horizon must be positive; a local regime must have
    /// `0 < beta < 1/3`.
    pub fn new(p: f64, q: f64, horizon: f64, regime: Regime) -> Result<Self> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidParameter(format!("recovery rate p = {p}")));
        }
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::InvalidParameter(format!("contact scale q = {q}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon T = {horizon}")));
        }
        if let Regime::Local {
            beta,
            exponent_divisor,
        } = &regime
        {
            if !(*beta > 0.0 && *beta < 1.0 / 3.0) {
                return Err(Error::InvalidParameter(format!(
                    "local regime requires 0 < beta < 1/3, got {beta}"
                )));
            }
            if !(*exponent_divisor > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "exponent divisor must be positive, got {exponent_divisor}"
                )));
            }
        }
        Ok(ModelParams {
            p,
            q,
            horizon,
            regime,
        })
    }
}

/// Per-susceptible infection pressure `lambda_i = sum over infected j of
/// tau_N(i, j)`, maintained incrementally by the engine.
///
/// For constant mean-field kernels every susceptible carries the same
/// pressure, which we store as a single scalar instead of an `O(N)` table.
#[derive(Debug, Clone, PartialEq)]
pub enum PressureTable {
    /// All susceptibles share one value (constant kernel fast path).
    Uniform { per_susceptible: f64 },
    /// One entry per individual; entries for non-susceptibles are ignored.
    PerIndividual(Vec<f64>),
}

impl PressureTable {
    /// Pressure of individual `i`. Only meaningful while `i` is susceptible.
    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        match self {
            PressureTable::Uniform { per_susceptible } => *per_susceptible,
            PressureTable::PerIndividual(v) => v[i],
        }
    }
}

/// The full state of the Markov chain: individuals, exact compartment
/// counts, the incrementally maintained infection-pressure table, and the
/// current time.
#[derive(Debug, Clone)]
pub struct PopulationState {
    pub individuals: Vec<Individual>,
    counts: [usize; 3],
    pub pressure: PressureTable,
    pub clock: f64,
}

impl PopulationState {
    /// Build from a list of individuals; counts are derived, the clock is
    /// zero and the pressure table is zero-initialised (the engine fills it
    /// in once a kernel is bound).
    pub fn from_individuals(individuals: Vec<Individual>) -> Self {
        let mut counts = [0usize; 3];
        for ind in &individuals {
            counts[ind.state.index()] += 1;
        }
        let n = individuals.len();
        PopulationState {
            individuals,
            counts,
            pressure: PressureTable::PerIndividual(vec![0.0; n]),
            clock: 0.0,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    #[inline]
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    #[inline]
    pub fn n_susceptible(&self) -> usize {
        self.counts[0]
    }

    #[inline]
    pub fn n_infected(&self) -> usize {
        self.counts[1]
    }

    #[inline]
    pub fn n_removed(&self) -> usize {
        self.counts[2]
    }

    /// Recount compartments from the raw individual states (oracle for the
    /// incrementally maintained counts).
    pub fn recount(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for ind in &self.individuals {
            counts[ind.state.index()] += 1;
        }
        counts
    }

    /// Apply a state transition, keeping the counts in sync. Panics if the
    /// individual is not currently in `from`.
    pub(crate) fn transition(&mut self, i: usize, from: HealthState, to: HealthState) {
        assert_eq!(
            self.individuals[i].state, from,
            "transition of individual {i} from wrong state"
        );
        self.individuals[i].state = to;
        self.counts[from.index()] -= 1;
        self.counts[to.index()] += 1;
    }

    /// Total event rate `p * n_I + sum over susceptible i of lambda_i`.
    /// Zero exactly when no event can ever occur again.
    pub fn total_event_rate(&self, params: &ModelParams) -> f64 {
        let recovery = params.p * self.n_infected() as f64;
        let infection = match &self.pressure {
            PressureTable::Uniform { per_susceptible } => {
                per_susceptible * self.n_susceptible() as f64
            }
            PressureTable::PerIndividual(v) => self
                .individuals
                .iter()
                .enumerate()
                .filter(|(_, ind)| ind.state == HealthState::S)
                .map(|(i, _)| v[i])
                .sum(),
        };
        recovery + infection
    }
}

/// Spatial density profile over `D`, normalised to integrate to one.
/// All variants are smooth on `D`, so sampled position laws satisfy a `C^2`
/// density hypothesis by construction.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialProfile {
    /// Lebesgue-uniform on the unit square.
    Uniform,
    /// Gaussian bump `exp(-|x - center|^2 / (2 width^2))` restricted to `D`
    /// and renormalised. `width` must be at least 0.02.
    GaussianBump { center: Point, width: f64 },
    /// Convex mixture of the above (weights are renormalised).
    Mixture(Vec<(f64, SpatialProfile)>),
}

/// How compartments are assigned given a sampled position.
#[derive(Debug, Clone, PartialEq)]
pub enum StateAssignment {
    /// Position-independent probabilities.
    Mix { s: f64, i: f64, r: f64 },
    /// Smooth compactly supported infection seed:
    /// `P(I | x) = peak * bump(|x - center| / radius)` with the standard
    /// `C^infinity` bump profile normalised to one at the centre;
    /// `P(R | x) = 0` and `P(S | x)` is the remainder.
    InfectedBump {
        center: Point,
        radius: f64,
        peak: f64,
    },
}

impl StateAssignment {
    /// Compartment probabilities at a position; always sums to one.
    pub fn probs(&self, x: Point) -> [f64; 3] {
        match self {
            StateAssignment::Mix { s, i, r } => [*s, *i, *r],
            StateAssignment::InfectedBump {
                center,
                radius,
                peak,
            } => {
                let t2 = x.dist_sq(center) / (radius * radius);
                let pi = if t2 < 1.0 {
                    peak * (1.0 - 1.0 / (1.0 - t2)).exp()
                } else {
                    0.0
                };
                [1.0 - pi, pi, 0.0]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            StateAssignment::Mix { s, i, r } => {
                if *s < 0.0 || *i < 0.0 || *r < 0.0 || (s + i + r - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "state mix ({s}, {i}, {r}) must be non-negative and sum to 1"
                    )));
                }
            }
            StateAssignment::InfectedBump { radius, peak, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidParameter("bump radius must be > 0".into()));
                }
                if !(0.0..=1.0).contains(peak) {
                    return Err(Error::InvalidParameter("bump peak must be in [0,1]".into()));
                }
            }
        }
        Ok(())
    }
}

/// Initial law of `(position, state)`: a normalised spatial density times a
/// per-position compartment assignment. Component densities are
/// `f0_A(x) = density(x) * P(A | x)`, and the three components integrate to
/// one in total.
#[derive(Debug, Clone)]
pub struct InitialDistribution {
    profile: NormProfile,
    assignment: StateAssignment,
    max_density: f64,
}

/// Internal normalised profile with cached constants.
#[derive(Debug, Clone, PartialEq)]
enum NormProfile {
    Uniform,
    Gaussian {
        center: Point,
        width: f64,
        inv_z: f64,
    },
    Mixture(Vec<(f64, NormProfile)>),
}

impl NormProfile {
    fn density(&self, x: Point) -> f64 {
        match self {
            NormProfile::Uniform => 1.0,
            NormProfile::Gaussian {
                center,
                width,
                inv_z,
            } => (-x.dist_sq(center) / (2.0 * width * width)).exp() * inv_z,
            NormProfile::Mixture(parts) => {
                parts.iter().map(|(w, p)| w * p.density(x)).sum::<f64>()
            }
        }
    }

    /// Analytic upper bound for the density over `D`.
    fn max_bound(&self) -> f64 {
        match self {
            NormProfile::Uniform => 1.0,
            NormProfile::Gaussian { inv_z, .. } => *inv_z,
            NormProfile::Mixture(parts) => {
                parts.iter().map(|(w, p)| w * p.max_bound()).sum::<f64>()
            }
        }
    }
}

/// Composite Simpson quadrature of `f` on `[0, 1]` with `2 m` intervals.
fn simpson_unit<F: Fn(f64) -> f64>(f: F, m: usize) -> f64 {
    let n = 2 * m;
    let h = 1.0 / n as f64;
    let mut acc = f(0.0) + f(1.0);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * h);
    }
    acc * h / 3.0
}

fn build_norm_profile(profile: &SpatialProfile) -> Result<NormProfile> {
    match profile {
        SpatialProfile::Uniform => Ok(NormProfile::Uniform),
        SpatialProfile::GaussianBump { center, width } => {
            if !(*width >= 0.02) {
                return Err(Error::InvalidParameter(format!(
                    "gaussian width {width} below minimum 0.02"
                )));
            }
            if !center.in_domain() {
                return Err(Error::InvalidParameter(
                    "gaussian centre must lie in D".into(),
                ));
            }
            // Separable mass over the square: Z = Zx * Zy.
            let w = *width;
            let zx = simpson_unit(|x| (-(x - center.x).powi(2) / (2.0 * w * w)).exp(), 4096);
            let zy = simpson_unit(|y| (-(y - center.y).powi(2) / (2.0 * w * w)).exp(), 4096);
            Ok(NormProfile::Gaussian {
                center: *center,
                width: w,
                inv_z: 1.0 / (zx * zy),
            })
        }
        SpatialProfile::Mixture(parts) => {
            if parts.is_empty() {
                return Err(Error::InvalidParameter("empty mixture".into()));
            }
            let total: f64 = parts.iter().map(|(w, _)| *w).sum();
            if !(total > 0.0) || parts.iter().any(|(w, _)| *w < 0.0) {
                return Err(Error::InvalidParameter(
                    "mixture weights must be non-negative with positive sum".into(),
                ));
            }
            let mut built = Vec::with_capacity(parts.len());
            for (w, p) in parts {
                if matches!(p, SpatialProfile::Mixture(_)) {
                    return Err(Error::InvalidParameter(
                        "nested mixtures are not supported".into(),
                    ));
                }
                built.push((w / total, build_norm_profile(p)?));
            }
            Ok(NormProfile::Mixture(built))
        }
    }
}

impl InitialDistribution {
    pub fn new(profile: SpatialProfile, assignment: StateAssignment) -> Result<Self> {
        assignment.validate()?;
        let profile = build_norm_profile(&profile)?;
        let max_density = profile.max_bound();
        Ok(InitialDistribution {
            profile,
            assignment,
            max_density,
        })
    }

    /// Uniform positions with position-independent state probabilities.
    pub fn uniform_mix(s: f64, i: f64, r: f64) -> Result<Self> {
        InitialDistribution::new(SpatialProfile::Uniform, StateAssignment::Mix { s, i, r })
    }

    /// Spatial density of positions (marginal over states).
    pub fn position_density(&self, x: Point) -> f64 {
        self.profile.density(x)
    }

    /// Per-compartment densities `[f0_S, f0_I, f0_R]` at a point.
    pub fn density(&self, x: Point) -> [f64; 3] {
        let d = self.profile.density(x);
        let p = self.assignment.probs(x);
        [d * p[0], d * p[1], d * p[2]]
    }

    /// Upper bound for the position density, used by rejection sampling.
    pub fn max_density(&self) -> f64 {
        self.max_density
    }

    /// Total mass over `D` by midpoint quadrature on an `m x m` grid
    /// (self-check; should be 1 within quadrature tolerance).
    pub fn quadrature_mass(&self, m: usize) -> f64 {
        let h = DOMAIN_SIDE / m as f64;
        let mut acc = 0.0;
        for iy in 0..m {
            for ix in 0..m {
                let p = Point::new((ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h);
                let d = self.density(p);
                acc += d[0] + d[1] + d[2];
            }
        }
        acc * h * h
    }

    /// Richardson-extrapolated total mass, killing the midpoint rule's
    /// `h^2` term: `(4 Q(2m) - Q(m)) / 3`.
    pub fn quadrature_mass_refined(&self, m: usize) -> f64 {
        (4.0 * self.quadrature_mass(2 * m) - self.quadrature_mass(m)) / 3.0
    }
}

/// Draw `n` i.i.d. individuals from `dist` (rejection sampling for the
/// position, conditional compartment law at the sampled position) and
/// assemble the initial population. Pure function of `(dist, n, seed)`.
///
/// The pressure table is zero-initialised here; binding an interaction
/// kernel and computing the actual pressures is the engine's job.
pub fn sample_initial_population(
    dist: &InitialDistribution,
    n: usize,
    seed: u64,
) -> Result<PopulationState> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "population size must be at least 1".into(),
        ));
    }
    let mut rng = make_rng(seed);
    let mut individuals = Vec::with_capacity(n);
    for _ in 0..n {
        let position = sample_position(dist, &mut rng)?;
        let probs = dist.assignment.probs(position);
        let u: f64 = rng.random::<f64>();
        let state = if u < probs[0] {
            HealthState::S
        } else if u < probs[0] + probs[1] {
            HealthState::I
        } else {
            HealthState::R
        };
        individuals.push(Individual { position, state });
    }
    Ok(PopulationState::from_individuals(individuals))
}

fn sample_position(dist: &InitialDistribution, rng: &mut SimRng) -> Result<Point> {
    let bound = dist.max_density();
    for _ in 0..REJECTION_CAP {
        let p = Point::new(
            rng.random::<f64>() * DOMAIN_SIDE,
            rng.random::<f64>() * DOMAIN_SIDE,
        );
        let u: f64 = rng.random::<f64>();
        if u * bound < dist.position_density(p) {
            return Ok(p);
        }
    }
    Err(Error::RejectionBound {
        attempts: REJECTION_CAP,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn health_state_ordering() {
        assert!(HealthState::S < HealthState::I);
        assert!(HealthState::I < HealthState::R);
        assert_eq!(HealthState::I.index(), 1);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.0, 1.0, 1.0, Regime::local(0.25)).is_ok());
        assert!(ModelParams::new(-1.0, 1.0, 1.0, Regime::local(0.25)).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.0, Regime::local(0.25)).is_err());
        // The beta = 1 nearest-neighbour regime is rejected outright.
        assert!(ModelParams::new(1.0, 1.0, 1.0, Regime::local(1.0)).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, Regime::local(1.0 / 3.0)).is_err());
        // Zero rates are allowed (frozen dynamics for sampling studies).
        assert!(ModelParams::new(0.0, 0.0, 1.0, Regime::local(0.25)).is_ok());
    }

    #[test]
    fn all_susceptible_sampling() {
        let dist = InitialDistribution::uniform_mix(1.0, 0.0, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 100, 42).unwrap();
        assert_eq!(pop.counts(), [100, 0, 0]);
        assert_eq!(pop.clock, 0.0);
        for ind in &pop.individuals {
            assert_eq!(ind.state, HealthState::S);
            assert!(ind.position.in_domain());
        }
        // No infected individuals means zero pressure everywhere.
        let params = ModelParams::new(1.0, 1.0, 1.0, Regime::local(0.25)).unwrap();
        assert_eq!(pop.total_event_rate(&params) - params.p * 0.0, 0.0);
    }

    #[test]
    fn all_infected_sampling() {
        let dist = InitialDistribution::uniform_mix(0.0, 1.0, 0.0).unwrap();
        let pop = sample_initial_population(&dist, 50, 7).unwrap();
        assert_eq!(pop.counts(), [0, 50, 0]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let dist = InitialDistribution::new(
            SpatialProfile::GaussianBump {
                center: Point::new(0.4, 0.6),
                width: 0.2,
            },
            StateAssignment::Mix {
                s: 0.8,
                i: 0.2,
                r: 0.0,
            },
        )
        .unwrap();
        let a = sample_initial_population(&dist, 500, 123).unwrap();
        let b = sample_initial_population(&dist, 500, 123).unwrap();
        for (x, y) in a.individuals.iter().zip(&b.individuals) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.state, y.state);
        }
        let c = sample_initial_population(&dist, 500, 124).unwrap();
        assert!(a
            .individuals
            .iter()
            .zip(&c.individuals)
            .any(|(x, y)| x.position != y.position));
    }

    #[test]
    fn empty_population_rejected() {
        let dist = InitialDistribution::uniform_mix(1.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            sample_initial_population(&dist, 0, 1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn total_mass_is_one() {
        let dist = InitialDistribution::new(
            SpatialProfile::Mixture(vec![
                (0.3, SpatialProfile::Uniform),
                (
                    0.7,
                    SpatialProfile::GaussianBump {
                        center: Point::new(0.5, 0.5),
                        width: 0.15,
                    },
                ),
            ]),
            StateAssignment::InfectedBump {
                center: Point::new(0.5, 0.5),
                radius: 0.2,
                peak: 0.8,
            },
        )
        .unwrap();
        assert!((dist.quadrature_mass_refined(256) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn counts_stay_consistent_under_transitions() {
        let dist = InitialDistribution::uniform_mix(0.5, 0.5, 0.0).unwrap();
        let mut pop = sample_initial_population(&dist, 200, 5).unwrap();
        let i = pop
            .individuals
            .iter()
            .position(|ind| ind.state == HealthState::I)
            .unwrap();
        pop.transition(i, HealthState::I, HealthState::R);
        assert_eq!(pop.counts(), pop.recount());
        let [s, inf, r] = pop.counts();
        assert_eq!(s + inf + r, 200);
    }
}
