//! Experiment configuration: a flat TOML file with four sections
//! (`[model]`, `[kernel]`, `[initial]`, `[run]`). See `configs/example.toml`
//! for a complete annotated example. Every constraint of the underlying
//! types is re-validated at parse time with field-precise messages.

use crate::HarnessError;
use episcale_core::geom::Point;
use episcale_core::kernel::MeanFieldKernel;
use episcale_core::model::{
    InitialDistribution, ModelParams, Regime, SpatialProfile, StateAssignment,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSection>,
    pub initial: InitialSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// "meanfield" or "local".
    pub regime: String,
    pub p: f64,
    pub q: f64,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Divisor `d` in the kernel rescaling exponent `beta/d`; defaults to
    /// the space dimension 2 and exists only for sensitivity checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent_divisor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// "constant" or "gaussian".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_scale: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// "uniform", "gaussian", or "mixture" (uniform + gaussian).
    pub profile: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// Mixture weight of the uniform component (the gaussian gets the rest).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_weight: Option<f64>,
    /// "mix" (constant probabilities) or "infected-bump".
    pub assignment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_center: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_peak: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Population sizes, strictly increasing.
    pub n: Vec<usize>,
    pub replicas: usize,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    /// Grid resolution for solvers, mollified densities and metrics.
    pub grid: usize,
    /// Solver time step.
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Holder exponent entering the commutator decay target (default 1/4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder_alpha: Option<f64>,
}

/// A fully validated configuration with resolved core types.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub file: ConfigFile,
    pub params: ModelParams,
    pub dist: InitialDistribution,
    pub ns: Vec<usize>,
    pub replicas: usize,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    pub grid: usize,
    pub dt: f64,
    pub workers: usize,
    pub holder_alpha: f64,
}

fn cfg_err(field: &str, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{field}: {msg}"))
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(format!("config parse error: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<ConfigFile, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Validate all sections and resolve the core model objects.
    /// `seed_override` and `workers_override` come from the command line.
    pub fn resolve(
        &self,
        seed_override: Option<u64>,
        workers_override: Option<usize>,
    ) -> Result<Resolved, HarnessError> {
        let regime = match self.model.regime.as_str() {
            "meanfield" => {
                let kernel = self.kernel.as_ref().ok_or_else(|| {
                    cfg_err("kernel", "section required for the meanfield regime")
                })?;
                Regime::MeanField(resolve_kernel(kernel)?)
            }
            "local" => {
                let beta = self
                    .model
                    .beta
                    .ok_or_else(|| cfg_err("model.beta", "required for the local regime"))?;
                if self.kernel.is_some() {
                    return Err(cfg_err("kernel", "section only applies to meanfield runs"));
                }
                Regime::Local {
                    beta,
                    exponent_divisor: self.model.exponent_divisor.unwrap_or(2.0),
                }
            }
            other => {
                return Err(cfg_err(
                    "model.regime",
                    format!("must be \"meanfield\" or \"local\", got {other:?}"),
                ))
            }
        };
        let params = ModelParams::new(self.model.p, self.model.q, self.model.horizon, regime)
            .map_err(|e| cfg_err("model", e))?;

        let dist = resolve_initial(&self.initial)?;

        let run = &self.run;
        if run.n.is_empty() {
            return Err(cfg_err("run.n", "at least one population size"));
        }
        if run.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(cfg_err("run.n", "sizes must be strictly increasing"));
        }
        if run.n[0] == 0 {
            return Err(cfg_err("run.n", "sizes must be positive"));
        }
        if run.replicas == 0 {
            return Err(cfg_err("run.replicas", "at least one replica"));
        }
        if run.grid < 8 {
            return Err(cfg_err("run.grid", "grid must be at least 8"));
        }
        if !(run.dt > 0.0) {
            return Err(cfg_err("run.dt", "time step must be positive"));
        }
        if run.snapshot_times.windows(2).any(|w| w[0] > w[1]) {
            return Err(cfg_err("run.snapshot_times", "must be sorted"));
        }
        if run
            .snapshot_times
            .iter()
            .any(|&t| t < 0.0 || t > self.model.horizon)
        {
            return Err(cfg_err(
                "run.snapshot_times",
                "must lie within [0, model.horizon]",
            ));
        }
        let workers = workers_override
            .or(run.workers)
            .unwrap_or(4)
            .clamp(1, 256);
        let holder_alpha = run.holder_alpha.unwrap_or(0.25);
        if !(holder_alpha > 0.0 && holder_alpha < 0.5) {
            return Err(cfg_err("run.holder_alpha", "must lie in (0, 1/2)"));
        }

        Ok(Resolved {
            file: self.clone(),
            params,
            dist,
            ns: run.n.clone(),
            replicas: run.replicas,
            snapshot_times: run.snapshot_times.clone(),
            seed: seed_override.unwrap_or(run.seed),
            grid: run.grid,
            dt: run.dt,
            workers,
            holder_alpha,
        })
    }
}

fn resolve_kernel(section: &KernelSection) -> Result<MeanFieldKernel, HarnessError> {
    match section.kind.as_str() {
        "constant" => Ok(MeanFieldKernel::Constant {
            value: section
                .value
                .ok_or_else(|| cfg_err("kernel.value", "required for constant kernels"))?,
        }),
        "gaussian" => Ok(MeanFieldKernel::Gaussian {
            length_scale: section.length_scale.ok_or_else(|| {
                cfg_err("kernel.length_scale", "required for gaussian kernels")
            })?,
        }),
        other => Err(cfg_err(
            "kernel.kind",
            format!("must be \"constant\" or \"gaussian\", got {other:?}"),
        )),
    }
}

fn resolve_initial(section: &InitialSection) -> Result<InitialDistribution, HarnessError> {
    let gaussian = || -> Result<SpatialProfile, HarnessError> {
        let c = section
            .center
            .ok_or_else(|| cfg_err("initial.center", "required for gaussian profiles"))?;
        let width = section
            .width
            .ok_or_else(|| cfg_err("initial.width", "required for gaussian profiles"))?;
        Ok(SpatialProfile::GaussianBump {
            center: Point::new(c[0], c[1]),
            width,
        })
    };
    let profile = match section.profile.as_str() {
        "uniform" => SpatialProfile::Uniform,
        "gaussian" => gaussian()?,
        "mixture" => {
            let w = section
                .uniform_weight
                .ok_or_else(|| cfg_err("initial.uniform_weight", "required for mixtures"))?;
            if !(0.0..=1.0).contains(&w) {
                return Err(cfg_err("initial.uniform_weight", "must lie in [0, 1]"));
            }
            SpatialProfile::Mixture(vec![(w, SpatialProfile::Uniform), (1.0 - w, gaussian()?)])
        }
        other => {
            return Err(cfg_err(
                "initial.profile",
                format!("must be \"uniform\", \"gaussian\" or \"mixture\", got {other:?}"),
            ))
        }
    };
    let assignment = match section.assignment.as_str() {
        "mix" => StateAssignment::Mix {
            s: section
                .s
                .ok_or_else(|| cfg_err("initial.s", "required for mix assignments"))?,
            i: section
                .i
                .ok_or_else(|| cfg_err("initial.i", "required for mix assignments"))?,
            r: section.r.unwrap_or(0.0),
        },
        "infected-bump" => {
            let c = section
                .bump_center
                .ok_or_else(|| cfg_err("initial.bump_center", "required for infected-bump"))?;
            StateAssignment::InfectedBump {
                center: Point::new(c[0], c[1]),
                radius: section
                    .bump_radius
                    .ok_or_else(|| cfg_err("initial.bump_radius", "required for infected-bump"))?,
                peak: section
                    .bump_peak
                    .ok_or_else(|| cfg_err("initial.bump_peak", "required for infected-bump"))?,
            }
        }
        other => {
            return Err(cfg_err(
                "initial.assignment",
                format!("must be \"mix\" or \"infected-bump\", got {other:?}"),
            ))
        }
    };
    InitialDistribution::new(profile, assignment).map_err(|e| cfg_err("initial", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[model]
regime = "local"
p = 1.0
q = 3.0
horizon = 2.0
beta = 0.25

[initial]
profile = "uniform"
assignment = "mix"
s = 0.9
i = 0.1

[run]
n = [500, 2000]
replicas = 4
snapshot_times = [1.0, 2.0]
seed = 42
grid = 64
dt = 1e-3
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = ConfigFile::parse(GOOD).unwrap();
        let resolved = cfg.resolve(None, None).unwrap();
        assert_eq!(resolved.ns, vec![500, 2000]);
        assert_eq!(resolved.seed, 42);
        assert_eq!(resolved.workers, 4);
        // CLI overrides win.
        let resolved = cfg.resolve(Some(7), Some(2)).unwrap();
        assert_eq!(resolved.seed, 7);
        assert_eq!(resolved.workers, 2);
    }

    #[test]
    fn rejects_unknown_fields_with_location() {
        let bad = GOOD.replace("replicas = 4", "replicas = 4\nbogus_field = 1");
        let err = ConfigFile::parse(&bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("bogus_field"), "{msg}");
    }

    #[test]
    fn rejects_decreasing_population_sizes() {
        let bad = GOOD.replace("n = [500, 2000]", "n = [2000, 500]");
        let err = ConfigFile::parse(&bad).unwrap().resolve(None, None);
        let msg = format!("{}", err.unwrap_err());
        assert!(msg.contains("run.n"), "{msg}");
    }

    #[test]
    fn rejects_nearest_neighbour_beta() {
        let bad = GOOD.replace("beta = 0.25", "beta = 0.4");
        let err = ConfigFile::parse(&bad).unwrap().resolve(None, None);
        assert!(err.is_err());
    }

    #[test]
    fn meanfield_needs_kernel_section() {
        let bad = GOOD
            .replace("regime = \"local\"", "regime = \"meanfield\"")
            .replace("beta = 0.25", "");
        let err = ConfigFile::parse(&bad).unwrap().resolve(None, None);
        let msg = format!("{}", err.unwrap_err());
        assert!(msg.contains("kernel"), "{msg}");
    }
}
