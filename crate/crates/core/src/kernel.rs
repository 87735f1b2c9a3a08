//! Interaction kernels for both scaling regimes.
//!
//! Mean-field: a bounded non-negative `T(x, y)` applied with weight `q/N`.
//! Local: the rescaled mollifier `theta_N(x) = N^beta * theta(N^(beta/2) x)`
//! built from the standard rotation-invariant bump, again with weight `q/N`.

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::model::{ModelParams, Regime};

/// Normalisation constant of the standard bump
/// `theta(x) = C0 * exp(-1 / (1 - |x|^2))` on `|x| < 1` in the plane,
/// fixed so that `theta` integrates to one.
///
/// Derivation (polar coordinates, substituting `u = r^2`):
/// `integral over R^2 = pi * integral_0^1 exp(-1/(1-u)) du`
/// `            = pi * 0.148495506775922047918 = 0.466512393178330068880`,
/// evaluated with 30-digit adaptive quadrature. `bump_normalization_quadrature`
/// below re-derives it numerically; a unit test pins the two together.
pub const BUMP_C0: f64 = 2.143_565_775_792_236_6;

/// Unnormalised bump profile `exp(-1/(1 - t))` as a function of `t = |x|^2`,
/// zero for `t >= 1`.
#[inline]
fn bump_raw(t: f64) -> f64 {
    if t < 1.0 {
        (-1.0 / (1.0 - t)).exp()
    } else {
        0.0
    }
}

/// The normalised bump `theta` evaluated at squared radius `t = |x|^2`.
#[inline]
pub fn bump_value_sq(t: f64) -> f64 {
    BUMP_C0 * bump_raw(t)
}

/// `theta(x)` for a planar offset.
#[inline]
pub fn bump_value(dx: f64, dy: f64) -> f64 {
    bump_value_sq(dx * dx + dy * dy)
}

/// Re-derive the bump normalisation `1 / integral(exp(-1/(1-|x|^2)))` by
/// composite-Simpson quadrature of the radial integral with `2m` intervals.
/// Used by tests to certify [`BUMP_C0`].
pub fn bump_normalization_quadrature(m: usize) -> f64 {
    // pi * int_0^1 exp(-1/(1-u)) du  with u = r^2.
    let n = 2 * m;
    let h = 1.0 / n as f64;
    let f = |u: f64| bump_raw(u);
    let mut acc = f(0.0) + f(1.0);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * h);
    }
    let integral = std::f64::consts::PI * acc * h / 3.0;
    1.0 / integral
}

/// Named bounded mean-field kernels `T(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanFieldKernel {
    /// `T(x, y) = value` everywhere.
    Constant { value: f64 },
    /// `T(x, y) = exp(-|x - y|^2 / (2 length_scale^2))` (separable in the
    /// coordinate offsets, which the grid solver exploits).
    Gaussian { length_scale: f64 },
}

impl MeanFieldKernel {
    pub fn eval(&self, x: Point, y: Point) -> f64 {
        match self {
            MeanFieldKernel::Constant { value } => *value,
            MeanFieldKernel::Gaussian { length_scale } => {
                (-x.dist_sq(&y) / (2.0 * length_scale * length_scale)).exp()
            }
        }
    }

    /// Supremum of `T` over `D x D`.
    pub fn sup(&self) -> f64 {
        match self {
            MeanFieldKernel::Constant { value } => *value,
            MeanFieldKernel::Gaussian { .. } => 1.0,
        }
    }

    /// Whether `T` is spatially constant (enables the `O(1)`-per-event
    /// pressure bookkeeping in the engine).
    pub fn is_constant(&self) -> bool {
        matches!(self, MeanFieldKernel::Constant { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MeanFieldKernel::Constant { value } if !(value.is_finite() && *value >= 0.0) => Err(
                Error::InvalidParameter(format!("constant kernel value {value}")),
            ),
            MeanFieldKernel::Gaussian { length_scale } if !(*length_scale > 0.0) => Err(
                Error::InvalidParameter(format!("gaussian length scale {length_scale}")),
            ),
            _ => Ok(()),
        }
    }
}

/// A kernel bound to a concrete population size, ready for rate evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    MeanField {
        t: MeanFieldKernel,
        q: f64,
        n: usize,
    },
    Local {
        beta: f64,
        /// Spatial rescaling factor `N^(beta / exponent_divisor)`.
        scale: f64,
        /// Amplitude `N^beta`.
        amplitude: f64,
        q: f64,
        n: usize,
    },
}

impl KernelSpec {
    /// Bind the regime of `params` to population size `n`.
    pub fn for_run(params: &ModelParams, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("kernel needs n >= 1".into()));
        }
        match &params.regime {
            Regime::MeanField(t) => {
                t.validate()?;
                Ok(KernelSpec::MeanField {
                    t: t.clone(),
                    q: params.q,
                    n,
                })
            }
            Regime::Local {
                beta,
                exponent_divisor,
            } => {
                let nf = n as f64;
                Ok(KernelSpec::Local {
                    beta: *beta,
                    scale: nf.powf(beta / exponent_divisor),
                    amplitude: nf.powf(*beta),
                    q: params.q,
                    n,
                })
            }
        }
    }

    pub fn is_local(&self) -> bool {
        matches!(self, KernelSpec::Local { .. })
    }

    pub fn population_size(&self) -> usize {
        match self {
            KernelSpec::MeanField { n, .. } | KernelSpec::Local { n, .. } => *n,
        }
    }

    /// Radius beyond which the pair rate vanishes: infinite in the
    /// mean-field regime, `N^(-beta/2)` times the unit bump radius in the
    /// local one.
    pub fn support_radius(&self) -> f64 {
        match self {
            KernelSpec::MeanField { .. } => f64::INFINITY,
            KernelSpec::Local { scale, .. } => 1.0 / scale,
        }
    }

    /// The rescaled mollifier `theta_N` at a planar offset (local regime
    /// only; zero outside the support).
    #[inline]
    pub fn theta_n(&self, dx: f64, dy: f64) -> f64 {
        match self {
            KernelSpec::Local {
                scale, amplitude, ..
            } => {
                let sx = scale * dx;
                let sy = scale * dy;
                amplitude * bump_value_sq(sx * sx + sy * sy)
            }
            KernelSpec::MeanField { .. } => panic!("theta_n on a mean-field kernel"),
        }
    }

    /// Pair interaction rate `tau_N(i, j)`:
    /// `(q/N) T(x_i, x_j)` in the mean-field regime,
    /// `(q/N) theta_N(x_i - x_j)` in the local one. Always non-negative.
    #[inline]
    pub fn eval_tau(&self, x_i: Point, x_j: Point) -> f64 {
        match self {
            KernelSpec::MeanField { t, q, n } => q / *n as f64 * t.eval(x_i, x_j),
            KernelSpec::Local { q, n, .. } => {
                q / *n as f64 * self.theta_n(x_i.x - x_j.x, x_i.y - x_j.y)
            }
        }
    }

    /// Numerical mass `integral of theta_N over the plane` by midpoint
    /// quadrature on an `m x m` grid covering the support square
    /// (self-check; equals one whenever the exponent divisor is 2).
    pub fn mollifier_mass(&self, m: usize) -> f64 {
        match self {
            KernelSpec::Local { .. } => {
                let r = self.support_radius();
                let h = 2.0 * r / m as f64;
                let mut acc = 0.0;
                for iy in 0..m {
                    let y = -r + (iy as f64 + 0.5) * h;
                    for ix in 0..m {
                        let x = -r + (ix as f64 + 0.5) * h;
                        acc += self.theta_n(x, y);
                    }
                }
                acc * h * h
            }
            KernelSpec::MeanField { .. } => panic!("mollifier_mass on a mean-field kernel"),
        }
    }
}
