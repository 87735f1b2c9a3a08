//! Transport-metric and density benchmarks: exact bipartite W1, the grid
//! flow behind the bounded-Lipschitz distance, and mollified densities.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use episcale_bench::{local_params, population};
use episcale_core::kernel::KernelSpec;
use episcale_core::measure::{mollified_density, w1_mollification_triple, EmpiricalMeasure};
use episcale_core::rng::make_rng;
use episcale_core::transport::{
    aggregate_to_grid, grid_flow_distance, w1_exact, AtomSet, GridSpec,
};
use episcale_core::Point;
use rand::Rng;
use std::hint::black_box;

fn random_atoms(n: usize, seed: u64) -> AtomSet {
    let mut rng = make_rng(seed);
    AtomSet::uniform(
        (0..n)
            .map(|_| Point::new(rng.random(), rng.random()))
            .collect(),
    )
}

fn bench_w1_exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("w1_exact");
    group.sample_size(10);
    for &n in &[64usize, 256, 1024] {
        let a = random_atoms(n, 1);
        let b = random_atoms(n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bch, _| {
            bch.iter(|| black_box(w1_exact(&a, &b).unwrap()));
        });
    }
    group.finish();
}

fn bench_grid_flow(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid_flow");
    group.sample_size(10);
    let gs = GridSpec::unit(64);
    let a = aggregate_to_grid(&random_atoms(4000, 3), &gs);
    let b = aggregate_to_grid(&random_atoms(4000, 4), &gs);
    group.bench_function("bl_64x64", |bch| {
        bch.iter(|| black_box(grid_flow_distance(&a, &b, &gs, true)));
    });
    group.bench_function("w1_64x64", |bch| {
        bch.iter(|| black_box(grid_flow_distance(&a, &b, &gs, false)));
    });
    group.finish();
}

fn bench_mollify(c: &mut Criterion) {
    let mut group = c.benchmark_group("mollify");
    group.sample_size(10);
    let n = 8000;
    let pop = population(n, 0.3, 5);
    let mu = EmpiricalMeasure::from_population(&pop);
    let spec = KernelSpec::for_run(&local_params(0.25), n).unwrap();
    group.bench_function("density_64", |bch| {
        bch.iter(|| black_box(mollified_density(&mu, &spec, 64).unwrap()));
    });
    group.bench_function("w1_mollification_triple_64", |bch| {
        bch.iter(|| black_box(w1_mollification_triple(&mu, &spec, 64)));
    });
    group.finish();
}

criterion_group!(benches, bench_w1_exact, bench_grid_flow, bench_mollify);
criterion_main!(benches);
