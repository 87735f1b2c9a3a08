use episcale_core::rng::make_rng;
use episcale_core::transport::{aggregate_to_grid, grid_flow_distance, AtomSet, GridSpec};
use episcale_core::Point;
use rand::Rng;

fn main() {
    let mut rng = make_rng(5);
    let gs = GridSpec::unit(64);
    // Realistic convergence-run masses: empirical component vs solver field.
    let a = AtomSet::uniform((0..8000).map(|_| Point::new(rng.random(), rng.random())).collect());
    let mut b = a.clone();
    for w in &mut b.weights { *w *= 0.62; }  // mass mismatch like S vs limit
    for p in &mut b.points { p.x = (p.x + 0.08).min(1.0); }
    let ca = aggregate_to_grid(&a, &gs);
    let cb = aggregate_to_grid(&b, &gs);
    let t0 = std::time::Instant::now();
    let d = grid_flow_distance(&ca, &cb, &gs, true);
    println!("BL 64x64: {d:.6} in {:?}", t0.elapsed());
    // Equal-mass W1 on an extended mollification-sized grid (102x102).
    let gse = GridSpec { nx: 102, ny: 102, h: 1.0/64.0, x0: -19.0/64.0, y0: -19.0/64.0 };
    let ca = aggregate_to_grid(&a, &gse);
    let b2 = a.translated(0.05, -0.03);
    let cb = aggregate_to_grid(&b2, &gse);
    let t0 = std::time::Instant::now();
    let d = grid_flow_distance(&ca, &cb, &gse, false);
    println!("W1 102x102: {d:.6} in {:?}", t0.elapsed());
}
