//! Shared setup helpers for the criterion benchmarks.

use episcale_core::model::{
    sample_initial_population, InitialDistribution, ModelParams, PopulationState, Regime,
};
use episcale_core::MeanFieldKernel;

pub fn population(n: usize, infected: f64, seed: u64) -> PopulationState {
    let dist = InitialDistribution::uniform_mix(1.0 - infected, infected, 0.0).unwrap();
    sample_initial_population(&dist, n, seed).unwrap()
}

pub fn local_params(beta: f64) -> ModelParams {
    ModelParams::new(1.0, 2.0, 1e9, Regime::local(beta)).unwrap()
}

pub fn constant_meanfield_params() -> ModelParams {
    ModelParams::new(
        1.0,
        2.0,
        1e9,
        Regime::MeanField(MeanFieldKernel::Constant { value: 1.0 }),
    )
    .unwrap()
}
