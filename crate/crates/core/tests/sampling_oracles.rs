//! Statistical oracles for initial-population sampling.

use episcale_core::geom::Point;
use episcale_core::model::{
    sample_initial_population, InitialDistribution, SpatialProfile, StateAssignment,
};
use episcale_core::rng::replica_seed;
use episcale_core::HealthState;

/// Binomial oracle: with P(I) = 0.1 and N = 10^4, the empirical infected
/// fraction lies within three binomial standard deviations of 0.1 in at
/// least 99% of replicas.
#[test]
fn infected_fraction_binomial_oracle() {
    let dist = InitialDistribution::uniform_mix(0.9, 0.1, 0.0).unwrap();
    let n = 10_000;
    let replicas = 200;
    let sigma = (0.1f64 * 0.9 / n as f64).sqrt();
    let mut within = 0;
    for r in 0..replicas {
        let pop = sample_initial_population(&dist, n, replica_seed(2024, r)).unwrap();
        let frac = pop.n_infected() as f64 / n as f64;
        if (frac - 0.1).abs() <= 3.0 * sigma {
            within += 1;
        }
    }
    assert!(
        within as f64 >= 0.99 * replicas as f64,
        "only {within}/{replicas} replicas within 3 sigma"
    );
}

/// Analytic mass of one histogram cell by refined midpoint quadrature.
fn cell_mass(dist: &InitialDistribution, ix: usize, iy: usize, bins: usize, sub: usize) -> f64 {
    let h = 1.0 / bins as f64;
    let hh = h / sub as f64;
    let mut acc = 0.0;
    for sy in 0..sub {
        for sx in 0..sub {
            let p = Point::new(
                ix as f64 * h + (sx as f64 + 0.5) * hh,
                iy as f64 * h + (sy as f64 + 0.5) * hh,
            );
            acc += dist.position_density(p);
        }
    }
    acc * hh * hh
}

/// Weak convergence of the empirical spatial distribution: the 32x32
/// histogram of 10^5 samples deviates from the analytic cell masses by
/// less than `5 sqrt(max cell mass / N)` in every cell.
#[test]
fn histogram_matches_analytic_cell_masses() {
    let bins = 32;
    let n = 100_000;
    let cases = [
        InitialDistribution::uniform_mix(1.0, 0.0, 0.0).unwrap(),
        InitialDistribution::new(
            SpatialProfile::GaussianBump {
                center: Point::new(0.4, 0.6),
                width: 0.22,
            },
            StateAssignment::Mix {
                s: 1.0,
                i: 0.0,
                r: 0.0,
            },
        )
        .unwrap(),
    ];
    for (case, dist) in cases.iter().enumerate() {
        let pop = sample_initial_population(dist, n, 31_000 + case as u64).unwrap();
        let mut hist = vec![0usize; bins * bins];
        for ind in &pop.individuals {
            let ix = ((ind.position.x * bins as f64) as usize).min(bins - 1);
            let iy = ((ind.position.y * bins as f64) as usize).min(bins - 1);
            hist[iy * bins + ix] += 1;
        }
        let analytic: Vec<f64> = (0..bins * bins)
            .map(|c| cell_mass(dist, c % bins, c / bins, bins, 8))
            .collect();
        let max_mass = analytic.iter().cloned().fold(0.0f64, f64::max);
        let tol = 5.0 * (max_mass / n as f64).sqrt();
        let mut worst = 0.0f64;
        for c in 0..bins * bins {
            let dev = (hist[c] as f64 / n as f64 - analytic[c]).abs();
            worst = worst.max(dev);
        }
        assert!(
            worst < tol,
            "case {case}: max cell deviation {worst} exceeds {tol}"
        );
    }
}

/// The compartment law is applied at the sampled position: infected
/// individuals concentrate inside the seed bump.
#[test]
fn infected_bump_localises_infections() {
    let dist = InitialDistribution::new(
        SpatialProfile::Uniform,
        StateAssignment::InfectedBump {
            center: Point::new(0.5, 0.5),
            radius: 0.2,
            peak: 0.9,
        },
    )
    .unwrap();
    let pop = sample_initial_population(&dist, 50_000, 77).unwrap();
    for ind in &pop.individuals {
        if ind.state == HealthState::I {
            assert!(
                ind.position.dist(&Point::new(0.5, 0.5)) <= 0.2,
                "infection outside the seed support"
            );
        }
    }
    assert!(pop.n_infected() > 0);
}
