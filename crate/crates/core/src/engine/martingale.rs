//! Martingale diagnostics for couplings of the empirical measure.
//!
//! For a test triple `phi` the functional
//! `M_t = <mu_t, phi> - <mu_0, phi> - int_0^t L<mu_s, phi> ds`
//! is a martingale; its quadratic variation integrand is the carre du champ
//! `sum of rate * (jump of <mu, phi>)^2` over all enabled transitions.
//! Both are piecewise constant between events and evaluated exactly here by
//! replaying a trajectory with the same incremental rate machinery the
//! engine uses.

use super::{EventKind, RateDynamics, Trajectory};
use crate::error::Result;
use crate::geom::Point;
use crate::kernel::bump_value_sq;
use crate::model::{HealthState, ModelParams, PopulationState, PressureTable};

/// Closed-form bounded test functions on `D`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFn {
    Constant(f64),
    /// `ax * x + ay * y + b`
    Affine { ax: f64, ay: f64, b: f64 },
    /// `amp * cos(pi kx x) * cos(pi ky y)`
    Cosine { kx: f64, ky: f64, amp: f64 },
    /// `amp * bump(|x - c|^2 / r^2)` with the standard smooth bump profile
    /// scaled to one at the centre.
    Bump { cx: f64, cy: f64, r: f64, amp: f64 },
}

impl TestFn {
    pub fn eval(&self, p: Point) -> f64 {
        match self {
            TestFn::Constant(c) => *c,
            TestFn::Affine { ax, ay, b } => ax * p.x + ay * p.y + b,
            TestFn::Cosine { kx, ky, amp } => {
                amp * (std::f64::consts::PI * kx * p.x).cos()
                    * (std::f64::consts::PI * ky * p.y).cos()
            }
            TestFn::Bump { cx, cy, r, amp } => {
                let dx = p.x - cx;
                let dy = p.y - cy;
                let t = (dx * dx + dy * dy) / (r * r);
                if t < 1.0 {
                    // bump normalised to one at the centre
                    amp * bump_value_sq(t) / bump_value_sq(0.0)
                } else {
                    0.0
                }
            }
        }
    }

    /// Upper bound for `|f|` on `D`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            TestFn::Constant(c) => c.abs(),
            TestFn::Affine { ax, ay, b } => ax.abs() + ay.abs() + b.abs(),
            TestFn::Cosine { amp, .. } | TestFn::Bump { amp, .. } => amp.abs(),
        }
    }
}

/// One bounded test function per compartment.
#[derive(Debug, Clone, PartialEq)]
pub struct TestTriple {
    pub s: TestFn,
    pub i: TestFn,
    pub r: TestFn,
}

impl TestTriple {
    pub fn constant(c: f64) -> Self {
        TestTriple {
            s: TestFn::Constant(c),
            i: TestFn::Constant(c),
            r: TestFn::Constant(c),
        }
    }

    pub fn eval(&self, state: HealthState, p: Point) -> f64 {
        match state {
            HealthState::S => self.s.eval(p),
            HealthState::I => self.i.eval(p),
            HealthState::R => self.r.eval(p),
        }
    }

    pub fn sup_bound(&self) -> f64 {
        self.s
            .sup_bound()
            .max(self.i.sup_bound())
            .max(self.r.sup_bound())
    }
}

/// Sampled path of the martingale `M_t` and its quadratic-variation
/// integrand along one trajectory.
///
/// `times[0] = 0` and the remaining entries are the event times;
/// `m_path[k]` is `M` evaluated at `times[k]` (just after the event);
/// `qv_integrand[k]` is the integrand on `[times[k], times[k+1])`, the last
/// entry extending to the trajectory horizon.
#[derive(Debug, Clone)]
pub struct MartingaleDiagnostic {
    pub times: Vec<f64>,
    pub m_path: Vec<f64>,
    pub qv_integrand: Vec<f64>,
    /// `M` at the horizon.
    pub m_terminal: f64,
    /// Accumulated quadratic variation at the horizon.
    pub qv_total: f64,
    pub horizon: f64,
}

/// Per-event-interval sums maintained during replay.
struct PhiSums {
    /// `sum_k phi^{A_k}(x_k)` over all individuals.
    s_phi: f64,
    /// `sum over infected of (phi^R - phi^I)(x_k)` and its square version.
    s_rec: f64,
    s_rec2: f64,
    /// Table mode: `sum over susceptibles of lambda_k * d(x_k)` and with
    /// `d^2`, where `d = phi^I - phi^S`.
    s_inf: f64,
    s_inf2: f64,
    /// Uniform mode: `sum over susceptibles of d(x_k)` and `d(x_k)^2`.
    s_d: f64,
    s_d2: f64,
}

/// Compute the martingale path of `phi` along a completed trajectory.
pub fn martingale_path(
    traj: &Trajectory,
    params: &ModelParams,
    phi: &TestTriple,
) -> Result<MartingaleDiagnostic> {
    let mut pop: PopulationState = traj.initial.clone();
    pop.clock = 0.0;
    let mut dynamics = RateDynamics::bind(&mut pop, params, false)?;
    let n = pop.len() as f64;

    // Precompute per-individual test values.
    let d_inf: Vec<f64> = pop
        .individuals
        .iter()
        .map(|ind| phi.i.eval(ind.position) - phi.s.eval(ind.position))
        .collect();
    let d_rec: Vec<f64> = pop
        .individuals
        .iter()
        .map(|ind| phi.r.eval(ind.position) - phi.i.eval(ind.position))
        .collect();

    let uniform = matches!(pop.pressure, PressureTable::Uniform { .. });
    let mut sums = PhiSums {
        s_phi: 0.0,
        s_rec: 0.0,
        s_rec2: 0.0,
        s_inf: 0.0,
        s_inf2: 0.0,
        s_d: 0.0,
        s_d2: 0.0,
    };
    for (k, ind) in pop.individuals.iter().enumerate() {
        sums.s_phi += phi.eval(ind.state, ind.position);
        match ind.state {
            HealthState::I => {
                sums.s_rec += d_rec[k];
                sums.s_rec2 += d_rec[k] * d_rec[k];
            }
            HealthState::S => {
                if uniform {
                    sums.s_d += d_inf[k];
                    sums.s_d2 += d_inf[k] * d_inf[k];
                } else if let PressureTable::PerIndividual(v) = &pop.pressure {
                    sums.s_inf += v[k] * d_inf[k];
                    sums.s_inf2 += v[k] * d_inf[k] * d_inf[k];
                }
            }
            HealthState::R => {}
        }
    }

    let generator = |pop: &PopulationState, sums: &PhiSums| -> (f64, f64) {
        let l0 = params.p / n * sums.s_rec;
        let qv0 = params.p / (n * n) * sums.s_rec2;
        let (l1, qv1) = if uniform {
            let u = match &pop.pressure {
                PressureTable::Uniform { per_susceptible } => *per_susceptible,
                _ => unreachable!(),
            };
            (u * sums.s_d / n, u * sums.s_d2 / (n * n))
        } else {
            (sums.s_inf / n, sums.s_inf2 / (n * n))
        };
        (l0 + l1, qv0 + qv1)
    };

    let s_phi0 = sums.s_phi;
    let mut times = Vec::with_capacity(traj.events.len() + 1);
    let mut m_path = Vec::with_capacity(traj.events.len() + 1);
    let mut qv_integrand = Vec::with_capacity(traj.events.len() + 1);
    times.push(0.0);
    m_path.push(0.0);

    let mut integral_l = 0.0;
    let mut qv_total = 0.0;
    let mut t_prev = 0.0;
    for ev in &traj.events {
        let (l_cur, qv_cur) = generator(&pop, &sums);
        qv_integrand.push(qv_cur);
        let dt = ev.time - t_prev;
        integral_l += l_cur * dt;
        qv_total += qv_cur * dt;
        t_prev = ev.time;

        let k = ev.kind.individual() as usize;
        match ev.kind {
            EventKind::Infection(_) => {
                sums.s_phi += d_inf[k];
                sums.s_rec += d_rec[k];
                sums.s_rec2 += d_rec[k] * d_rec[k];
                if uniform {
                    sums.s_d -= d_inf[k];
                    sums.s_d2 -= d_inf[k] * d_inf[k];
                } else if let PressureTable::PerIndividual(v) = &pop.pressure {
                    // k leaves the susceptible sums before its slot clears.
                    sums.s_inf -= v[k] * d_inf[k];
                    sums.s_inf2 -= v[k] * d_inf[k] * d_inf[k];
                }
                dynamics.apply_infection(&mut pop, k, |j, delta| {
                    sums.s_inf += delta * d_inf[j];
                    sums.s_inf2 += delta * d_inf[j] * d_inf[j];
                });
            }
            EventKind::Recovery(_) => {
                sums.s_phi += d_rec[k];
                sums.s_rec -= d_rec[k];
                sums.s_rec2 -= d_rec[k] * d_rec[k];
                dynamics.apply_recovery(&mut pop, k, |j, delta| {
                    sums.s_inf += delta * d_inf[j];
                    sums.s_inf2 += delta * d_inf[j] * d_inf[j];
                });
            }
        }
        pop.clock = ev.time;
        times.push(ev.time);
        m_path.push((sums.s_phi - s_phi0) / n - integral_l);
    }
    // Tail interval up to the horizon.
    let (l_cur, qv_cur) = generator(&pop, &sums);
    qv_integrand.push(qv_cur);
    let dt = traj.horizon - t_prev;
    integral_l += l_cur * dt;
    qv_total += qv_cur * dt;
    let m_terminal = (sums.s_phi - s_phi0) / n - integral_l;

    Ok(MartingaleDiagnostic {
        times,
        m_path,
        qv_integrand,
        m_terminal,
        qv_total,
        horizon: traj.horizon,
    })
}
