//! Deterministic solvers for the two limit systems and the classical SIR
//! reference, plus the weak-formulation residual checker.
//!
//! Both grid systems share the rhs structure
//! `dS = -q * (force) * fS`, `dR = p * fI`, `dI = -(dS + dR)`,
//! where the force is the kernel-averaged infected density (non-local
//! system) or the pointwise infected density (local system). Writing `dI`
//! as the negated sum makes per-cell mass cancellation exact in floating
//! point when sums are taken in the fixed order `(dS + dR) + dI`.

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::kernel::MeanFieldKernel;
use crate::transport::AtomSet;

/// Right-hand side of a grid system: writes the time derivative of `field`
/// into `out`.
pub trait GridRhs {
    fn eval(&self, field: &GridField, out: &mut GridField);
}

/// Kernel-coupled SIR: `dS(x) = -q (QT fI)(x) fS(x)` with
/// `(QT g)(x) = h^2 sum over cells x0 of T(x0, x) g(x0)` (midpoint rule).
pub struct NonlocalRhs {
    pub p: f64,
    pub q: f64,
    kernel: MeanFieldKernel,
    n: usize,
    /// One-dimensional kernel table `exp(-(k h)^2 / (2 l^2))` for the
    /// separable gaussian fast path.
    k1d: Vec<f64>,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl NonlocalRhs {
    pub fn new(kernel: MeanFieldKernel, p: f64, q: f64, n: usize) -> Self {
        let h = 1.0 / n as f64;
        let k1d = match &kernel {
            MeanFieldKernel::Gaussian { length_scale } => (0..n)
                .map(|k| {
                    let d = k as f64 * h;
                    (-d * d / (2.0 * length_scale * length_scale)).exp()
                })
                .collect(),
            _ => Vec::new(),
        };
        NonlocalRhs {
            p,
            q,
            kernel,
            n,
            k1d,
            scratch: std::cell::RefCell::new(vec![0.0; n * n]),
        }
    }

    /// The quadrature operator `QT` applied to the infected component.
    /// Constant kernels collapse to a scalar; gaussians factor into two
    /// one-dimensional passes (row then column, fixed summation order).
    fn apply_qt(&self, f_i: &[f64], out: &mut [f64], h: f64) {
        let n = self.n;
        let cell = h * h;
        match &self.kernel {
            MeanFieldKernel::Constant { value } => {
                let total: f64 = f_i.iter().sum();
                let qt = value * cell * total;
                out.iter_mut().for_each(|v| *v = qt);
            }
            MeanFieldKernel::Gaussian { .. } => {
                let mut tmp = self.scratch.borrow_mut();
                // Row pass: tmp(iy, ix) = sum_jx k[|ix - jx|] f(iy, jx)
                for iy in 0..n {
                    let row = &f_i[iy * n..(iy + 1) * n];
                    let trow = &mut tmp[iy * n..(iy + 1) * n];
                    for ix in 0..n {
                        let mut acc = 0.0;
                        for (jx, fv) in row.iter().enumerate() {
                            acc += self.k1d[ix.abs_diff(jx)] * fv;
                        }
                        trow[ix] = acc;
                    }
                }
                // Column pass with the h^2 quadrature weight.
                for iy in 0..n {
                    for ix in 0..n {
                        let mut acc = 0.0;
                        for jy in 0..n {
                            acc += self.k1d[iy.abs_diff(jy)] * tmp[jy * n + ix];
                        }
                        out[iy * n + ix] = acc * cell;
                    }
                }
            }
        }
    }

    /// Direct double-loop evaluation of `QT` (oracle for the fast paths;
    /// `reverse` flips the summation order to probe order independence).
    pub fn apply_qt_naive(&self, f_i: &[f64], grid: &GridField, reverse: bool) -> Vec<f64> {
        let cells = grid.cells();
        let mut out = vec![0.0; cells];
        let order: Vec<usize> = if reverse {
            (0..cells).rev().collect()
        } else {
            (0..cells).collect()
        };
        for target in 0..cells {
            let xt = grid.cell_center(target);
            let mut acc = 0.0;
            for &src in &order {
                acc += self.kernel.eval(grid.cell_center(src), xt) * f_i[src];
            }
            out[target] = acc * grid.h() * grid.h();
        }
        out
    }
}

impl GridRhs for NonlocalRhs {
    fn eval(&self, field: &GridField, out: &mut GridField) {
        assert_eq!(field.n(), self.n);
        let cells = field.cells();
        // Reuse out.i as the QT buffer before overwriting it.
        let mut qt = vec![0.0; cells];
        self.apply_qt(&field.i, &mut qt, field.h());
        for c in 0..cells {
            let a = self.q * qt[c] * field.s[c];
            let b = self.p * field.i[c];
            out.s[c] = -a;
            out.r[c] = b;
            out.i[c] = -(out.s[c] + out.r[c]);
        }
    }
}

/// Pointwise SIR field: every cell evolves independently.
pub struct LocalRhs {
    pub p: f64,
    pub q: f64,
}

impl GridRhs for LocalRhs {
    fn eval(&self, field: &GridField, out: &mut GridField) {
        for c in 0..field.cells() {
            let a = self.q * field.i[c] * field.s[c];
            let b = self.p * field.i[c];
            out.s[c] = -a;
            out.r[c] = b;
            out.i[c] = -(out.s[c] + out.r[c]);
        }
    }
}

/// Tolerated transient negativity before the integrator aborts.
const NEGATIVITY_FLOOR: f64 = -1e-9;

fn check_field(field: &GridField, t: f64) -> Result<()> {
    if field.has_nan() {
        return Err(Error::Numerical {
            what: "NaN in field".into(),
            t,
        });
    }
    let min = field.min_value();
    if min < NEGATIVITY_FLOOR {
        return Err(Error::Numerical {
            what: format!("negativity {min} beyond {NEGATIVITY_FLOOR} (reduce dt)"),
            t,
        });
    }
    Ok(())
}

fn rk4_step<R: GridRhs>(rhs: &R, field: &mut GridField, dt: f64, work: &mut [GridField; 5]) {
    let [k1, k2, k3, k4, tmp] = work;
    rhs.eval(field, k1);
    axpy(tmp, field, k1, dt / 2.0);
    rhs.eval(tmp, k2);
    axpy(tmp, field, k2, dt / 2.0);
    rhs.eval(tmp, k3);
    axpy(tmp, field, k3, dt);
    rhs.eval(tmp, k4);
    for c in 0..3 {
        let f = field.component_mut(c);
        let (a, b, cc, d) = (
            k1.component(c),
            k2.component(c),
            k3.component(c),
            k4.component(c),
        );
        for idx in 0..f.len() {
            f[idx] += dt / 6.0 * (a[idx] + 2.0 * b[idx] + 2.0 * cc[idx] + d[idx]);
        }
    }
}

fn axpy(out: &mut GridField, base: &GridField, k: &GridField, factor: f64) {
    for c in 0..3 {
        let o = out.component_mut(c);
        let b = base.component(c);
        let kc = k.component(c);
        for idx in 0..o.len() {
            o[idx] = b[idx] + factor * kc[idx];
        }
    }
}

/// Classical fourth-order Runge-Kutta trajectory with fixed step `dt`.
/// Snapshots are recorded every `record_every` steps (and always at the
/// end); `record_every = 0` records only the initial and final fields.
pub fn rk4_integrate<R: GridRhs>(
    rhs: &R,
    field0: &GridField,
    dt: f64,
    n_steps: usize,
    record_every: usize,
) -> Result<Vec<(f64, GridField)>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt}")));
    }
    check_field(field0, 0.0)?;
    let n = field0.n();
    let mut work = [
        GridField::zeros(n),
        GridField::zeros(n),
        GridField::zeros(n),
        GridField::zeros(n),
        GridField::zeros(n),
    ];
    let mut field = field0.clone();
    let mut out = vec![(0.0, field0.clone())];
    for step in 1..=n_steps {
        rk4_step(rhs, &mut field, dt, &mut work);
        let t = step as f64 * dt;
        check_field(&field, t)?;
        if (record_every > 0 && step % record_every == 0) || step == n_steps {
            out.push((t, field.clone()));
        }
    }
    Ok(out)
}

/// Integrate and capture the fields at the requested times (rounded to the
/// nearest step of the fixed grid).
pub fn rk4_solve_at<R: GridRhs>(
    rhs: &R,
    field0: &GridField,
    dt: f64,
    times: &[f64],
) -> Result<Vec<(f64, GridField)>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt}")));
    }
    check_field(field0, 0.0)?;
    let steps: Vec<usize> = times.iter().map(|t| (t / dt).round() as usize).collect();
    if steps.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter(
            "snapshot times must be sorted".into(),
        ));
    }
    let n_steps = steps.last().copied().unwrap_or(0);
    let n = field0.n();
    let mut work = [
        GridField::zeros(n),
        GridField::zeros(n),
        GridField::zeros(n),
        GridField::zeros(n),
        GridField::zeros(n),
    ];
    let mut field = field0.clone();
    let mut out = Vec::with_capacity(times.len());
    let mut want = 0usize;
    while want < steps.len() && steps[want] == 0 {
        out.push((0.0, field.clone()));
        want += 1;
    }
    for step in 1..=n_steps {
        rk4_step(rhs, &mut field, dt, &mut work);
        let t = step as f64 * dt;
        check_field(&field, t)?;
        while want < steps.len() && steps[want] == step {
            out.push((t, field.clone()));
            want += 1;
        }
    }
    Ok(out)
}

/// Aggregate state of the classical three-compartment system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalSirState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl ClassicalSirState {
    pub fn total(&self) -> f64 {
        (self.s + self.r) + self.i
    }
}

/// RK4 trajectory of `S' = -beta S I, I' = beta S I - gamma I, R' = gamma I`.
pub fn classical_sir(
    state0: ClassicalSirState,
    beta: f64,
    gamma: f64,
    dt: f64,
    n_steps: usize,
) -> Result<Vec<(f64, ClassicalSirState)>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt}")));
    }
    let deriv = |st: &ClassicalSirState| {
        let a = beta * st.s * st.i;
        let b = gamma * st.i;
        let ds = -a;
        let dr = b;
        ClassicalSirState {
            s: ds,
            r: dr,
            i: -(ds + dr),
        }
    };
    let mut st = state0;
    let mut out = vec![(0.0, st)];
    for step in 1..=n_steps {
        let k1 = deriv(&st);
        let k2 = deriv(&advance(&st, &k1, dt / 2.0));
        let k3 = deriv(&advance(&st, &k2, dt / 2.0));
        let k4 = deriv(&advance(&st, &k3, dt));
        st = ClassicalSirState {
            s: st.s + dt / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
            i: st.i + dt / 6.0 * (k1.i + 2.0 * k2.i + 2.0 * k3.i + k4.i),
            r: st.r + dt / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r),
        };
        let t = step as f64 * dt;
        if !(st.s.is_finite() && st.i.is_finite() && st.r.is_finite()) {
            return Err(Error::Numerical {
                what: "classical SIR diverged".into(),
                t,
            });
        }
        out.push((t, st));
    }
    Ok(out)
}

fn advance(st: &ClassicalSirState, k: &ClassicalSirState, f: f64) -> ClassicalSirState {
    ClassicalSirState {
        s: st.s + f * k.s,
        i: st.i + f * k.i,
        r: st.r + f * k.r,
    }
}

/// Maximum drift of the per-cell local invariant
/// `(fS + fI) - (p/q) ln fS` between two fields, evaluated only where both
/// susceptible densities exceed `floor` (the logarithm blows up otherwise).
pub fn local_invariant_drift(
    f0: &GridField,
    f1: &GridField,
    p: f64,
    q: f64,
    floor: f64,
) -> f64 {
    assert!(q > 0.0, "invariant undefined for q = 0");
    let mut worst = 0.0f64;
    for c in 0..f0.cells() {
        if f0.s[c] > floor && f1.s[c] > floor {
            let v0 = (f0.s[c] + f0.i[c]) - p / q * f0.s[c].ln();
            let v1 = (f1.s[c] + f1.i[c]) - p / q * f1.s[c].ln();
            worst = worst.max((v1 - v0).abs());
        }
    }
    worst
}

/// Residual of the weak (test-function) formulation along a trajectory of
/// measure triples `(t_k, [mu_S, mu_I, mu_R])`:
///
/// `|<mu_T, phi> - <mu_0, phi> - q II - p I|`
///
/// with `II = int int <mu_s^I, T(., x)> (phi^I - phi^S)(x) mu_s^S(dx) ds`
/// and `I = int <mu_s^I, phi^R - phi^I> ds`, time integrals by the
/// trapezoidal rule over the snapshot grid.
pub fn weak_residual(
    traj: &[(f64, [AtomSet; 3])],
    phi: &crate::engine::TestTriple,
    kernel: &MeanFieldKernel,
    p: f64,
    q: f64,
) -> f64 {
    assert!(traj.len() >= 2, "need at least two snapshots");
    let couple = |m: &[AtomSet; 3]| -> f64 {
        let mut acc = 0.0;
        for (c, f) in [&phi.s, &phi.i, &phi.r].iter().enumerate() {
            for (pnt, w) in m[c].points.iter().zip(&m[c].weights) {
                acc += w * f.eval(*pnt);
            }
        }
        acc
    };
    let infection_term = |m: &[AtomSet; 3]| -> f64 {
        let inf = &m[1];
        let sus = &m[0];
        let const_kernel = match kernel {
            MeanFieldKernel::Constant { value } => Some(*value),
            _ => None,
        };
        let mass_i = inf.total_mass();
        let mut acc = 0.0;
        for (xa, wa) in sus.points.iter().zip(&sus.weights) {
            let inner = match const_kernel {
                Some(v) => v * mass_i,
                None => inf
                    .points
                    .iter()
                    .zip(&inf.weights)
                    .map(|(xb, wb)| wb * kernel.eval(*xb, *xa))
                    .sum(),
            };
            acc += wa * inner * (phi.i.eval(*xa) - phi.s.eval(*xa));
        }
        acc
    };
    let recovery_term = |m: &[AtomSet; 3]| -> f64 {
        m[1].points
            .iter()
            .zip(&m[1].weights)
            .map(|(x, w)| w * (phi.r.eval(*x) - phi.i.eval(*x)))
            .sum()
    };

    let mut int_inf = 0.0;
    let mut int_rec = 0.0;
    let mut prev_inf = infection_term(&traj[0].1);
    let mut prev_rec = recovery_term(&traj[0].1);
    for k in 1..traj.len() {
        let dt = traj[k].0 - traj[k - 1].0;
        let cur_inf = infection_term(&traj[k].1);
        let cur_rec = recovery_term(&traj[k].1);
        int_inf += 0.5 * dt * (prev_inf + cur_inf);
        int_rec += 0.5 * dt * (prev_rec + cur_rec);
        prev_inf = cur_inf;
        prev_rec = cur_rec;
    }
    let change = couple(&traj[traj.len() - 1].1) - couple(&traj[0].1);
    (change - q * int_inf - p * int_rec).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{TestFn, TestTriple};
    use crate::geom::Point;
    use crate::model::{InitialDistribution, SpatialProfile, StateAssignment};

    fn bump_field(n: usize) -> GridField {
        let dist = InitialDistribution::new(
            SpatialProfile::GaussianBump {
                center: Point::new(0.45, 0.55),
                width: 0.18,
            },
            StateAssignment::InfectedBump {
                center: Point::new(0.4, 0.5),
                radius: 0.25,
                peak: 0.4,
            },
        )
        .unwrap();
        GridField::from_density(&dist, n)
    }

    #[test]
    fn nonlocal_rhs_vanishes_without_infected() {
        let mut f = bump_field(16);
        // Move everything into S.
        for c in 0..f.cells() {
            f.s[c] += f.i[c] + f.r[c];
            f.i[c] = 0.0;
            f.r[c] = 0.0;
        }
        let rhs = NonlocalRhs::new(MeanFieldKernel::Constant { value: 1.0 }, 1.0, 2.0, 16);
        let mut out = GridField::zeros(16);
        rhs.eval(&f, &mut out);
        assert!(out.s.iter().all(|&v| v == 0.0));
        assert!(out.i.iter().all(|&v| v == 0.0));
        assert!(out.r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_rates_freeze_everything() {
        let f = bump_field(16);
        let rhs = NonlocalRhs::new(MeanFieldKernel::Constant { value: 1.0 }, 0.0, 0.0, 16);
        let mut out = GridField::zeros(16);
        rhs.eval(&f, &mut out);
        assert!(out.s.iter().all(|&v| v == 0.0));
        assert!(out.i.iter().all(|&v| v == 0.0));
        assert!(out.r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rhs_cell_sums_cancel_exactly() {
        let f = bump_field(24);
        for rhs in [
            NonlocalRhs::new(MeanFieldKernel::Gaussian { length_scale: 0.2 }, 1.3, 2.7, 24),
        ] {
            let mut out = GridField::zeros(24);
            rhs.eval(&f, &mut out);
            for c in 0..f.cells() {
                assert_eq!(out.cell_sum(c), 0.0, "cell {c}");
            }
        }
        let rhs = LocalRhs { p: 0.9, q: 3.1 };
        let mut out = GridField::zeros(24);
        rhs.eval(&f, &mut out);
        for c in 0..f.cells() {
            assert_eq!(out.cell_sum(c), 0.0);
        }
    }

    #[test]
    fn gaussian_fast_path_matches_naive_quadrature() {
        let f = bump_field(20);
        let rhs = NonlocalRhs::new(MeanFieldKernel::Gaussian { length_scale: 0.25 }, 1.0, 1.0, 20);
        let mut fast = vec![0.0; f.cells()];
        rhs.apply_qt(&f.i, &mut fast, f.h());
        let naive = rhs.apply_qt_naive(&f.i, &f, false);
        let reversed = rhs.apply_qt_naive(&f.i, &f, true);
        for c in 0..f.cells() {
            assert!((fast[c] - naive[c]).abs() < 1e-13 * naive[c].abs().max(1.0));
            assert!((naive[c] - reversed[c]).abs() < 1e-12 * naive[c].abs().max(1.0));
        }
    }

    #[test]
    fn local_cells_evolve_independently() {
        let f = bump_field(8);
        let rhs = LocalRhs { p: 1.0, q: 2.0 };
        let mut base = GridField::zeros(8);
        rhs.eval(&f, &mut base);
        // Perturb one cell; all other derivatives must be bit-identical.
        let mut g = f.clone();
        g.i[27] *= 1.5;
        g.s[27] *= 0.5;
        let mut pert = GridField::zeros(8);
        rhs.eval(&g, &mut pert);
        for c in 0..f.cells() {
            if c != 27 {
                assert_eq!(base.s[c], pert.s[c]);
                assert_eq!(base.i[c], pert.i[c]);
                assert_eq!(base.r[c], pert.r[c]);
            }
        }
    }

    #[test]
    fn zero_rhs_keeps_fields_bit_identical() {
        struct ZeroRhs;
        impl GridRhs for ZeroRhs {
            fn eval(&self, _f: &GridField, out: &mut GridField) {
                for c in 0..3 {
                    out.component_mut(c).iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        let f = bump_field(12);
        let traj = rk4_integrate(&ZeroRhs, &f, 0.01, 50, 0).unwrap();
        assert_eq!(traj.last().unwrap().1, f);
    }

    #[test]
    fn rk4_observed_order_at_least_3_7() {
        // Richardson order estimation on a smooth non-local problem:
        // err(dt) ~ C dt^4, so log2(err(2dt)/err(dt)) ~ 4.
        let f = bump_field(12);
        let rhs = NonlocalRhs::new(MeanFieldKernel::Gaussian { length_scale: 0.3 }, 1.0, 4.0, 12);
        let t_end = 0.8;
        let reference = rk4_integrate(&rhs, &f, t_end / 1024.0, 1024, 0)
            .unwrap()
            .pop()
            .unwrap()
            .1;
        let coarse = rk4_integrate(&rhs, &f, t_end / 16.0, 16, 0)
            .unwrap()
            .pop()
            .unwrap()
            .1;
        let fine = rk4_integrate(&rhs, &f, t_end / 32.0, 32, 0)
            .unwrap()
            .pop()
            .unwrap()
            .1;
        let e_coarse = coarse.l2_distance(&reference);
        let e_fine = fine.l2_distance(&reference);
        let order = (e_coarse / e_fine).log2();
        assert!(order >= 3.7, "observed order {order}");
    }

    #[test]
    fn mass_conserved_over_thousand_steps() {
        let f = bump_field(16);
        let rhs = NonlocalRhs::new(MeanFieldKernel::Constant { value: 1.0 }, 1.0, 3.0, 16);
        let traj = rk4_integrate(&rhs, &f, 1e-3, 1000, 0).unwrap();
        let final_f = &traj.last().unwrap().1;
        let mut worst = 0.0f64;
        for c in 0..f.cells() {
            worst = worst.max((final_f.cell_sum(c) - f.cell_sum(c)).abs());
        }
        assert!(worst < 1e-10, "per-cell mass drift {worst}");
    }

    #[test]
    fn classical_sir_conservation_and_frozen_start() {
        let frozen = classical_sir(
            ClassicalSirState {
                s: 0.99,
                i: 0.0,
                r: 0.01,
            },
            2.0,
            1.0,
            1e-3,
            1000,
        )
        .unwrap();
        for (_, st) in &frozen {
            assert_eq!(st.s, 0.99);
            assert_eq!(st.i, 0.0);
        }
        let traj = classical_sir(
            ClassicalSirState {
                s: 0.95,
                i: 0.05,
                r: 0.0,
            },
            3.0,
            1.0,
            1e-3,
            5000,
        )
        .unwrap();
        for (_, st) in &traj {
            assert!((st.total() - 1.0).abs() < 1e-12);
            assert!(st.s >= 0.0 && st.i >= 0.0 && st.r >= 0.0);
        }
        // Epidemic actually burned through.
        assert!(traj.last().unwrap().1.r > 0.5);
    }

    #[test]
    fn local_invariant_is_conserved_by_integration() {
        let f = bump_field(16);
        let (p, q) = (1.0, 2.5);
        let rhs = LocalRhs { p, q };
        let traj = rk4_integrate(&rhs, &f, 1e-4, 10_000, 0).unwrap();
        let drift = local_invariant_drift(&f, &traj.last().unwrap().1, p, q, 1e-6);
        assert!(drift < 1e-8, "invariant drift {drift} over unit time");
    }

    #[test]
    fn weak_residual_constant_phi_is_mass_change() {
        // phi = (1,1,1): the residual reduces to |total mass change|,
        // which vanishes along solver trajectories.
        let f = bump_field(16);
        let rhs = NonlocalRhs::new(MeanFieldKernel::Constant { value: 1.0 }, 1.0, 3.0, 16);
        let traj = rk4_integrate(&rhs, &f, 1e-3, 500, 50).unwrap();
        let measures: Vec<(f64, [AtomSet; 3])> = traj
            .iter()
            .map(|(t, g)| (*t, g.to_atom_sets()))
            .collect();
        let phi = TestTriple::constant(1.0);
        let res = weak_residual(
            &measures,
            &phi,
            &MeanFieldKernel::Constant { value: 1.0 },
            1.0,
            3.0,
        );
        assert!(res < 1e-12, "mass-change residual {res}");
    }

    #[test]
    fn weak_residual_shrinks_under_grid_refinement() {
        let phi = TestTriple {
            s: TestFn::Cosine {
                kx: 1.0,
                ky: 0.0,
                amp: 1.0,
            },
            i: TestFn::Affine {
                ax: 0.5,
                ay: 0.5,
                b: 0.0,
            },
            r: TestFn::Constant(0.3),
        };
        let kernel = MeanFieldKernel::Gaussian { length_scale: 0.3 };
        let mut residuals = Vec::new();
        for n in [16, 32] {
            let f = bump_field(n);
            let rhs = NonlocalRhs::new(kernel.clone(), 1.0, 3.0, n);
            let traj = rk4_integrate(&rhs, &f, 1e-3, 1000, 100).unwrap();
            let measures: Vec<(f64, [AtomSet; 3])> =
                traj.iter().map(|(t, g)| (*t, g.to_atom_sets())).collect();
            residuals.push(weak_residual(&measures, &phi, &kernel, 1.0, 3.0));
        }
        assert!(
            residuals[1] < residuals[0],
            "residual must shrink under refinement: {residuals:?}"
        );
    }
}
