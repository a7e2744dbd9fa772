use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use lcflow_core::calculus::Calculus;
use lcflow_core::field::ScalarField;
use lcflow_core::grid::{CalculusMode, Grid};
use lcflow_core::integrator::{build_initial_data, step_with_dt, InitSpec, Projection};
use lcflow_core::model::{rhs, PhysParams};

fn setup(n: usize, mode: CalculusMode) -> (Calculus, PhysParams, lcflow_core::model::State) {
    let grid = Grid::cube(n).unwrap();
    let calc = Calculus::new(grid, mode);
    let p = PhysParams::default();
    let spec = InitSpec {
        velocity_amplitude: 1.0,
        grad_d_target: 0.5,
        seed: 7,
        ..InitSpec::default()
    };
    let state = build_initial_data(&calc, &p, &spec).unwrap();
    (calc, p, state)
}

fn laplacian(c: &mut Criterion) {
    for n in [16, 32] {
        let grid = Grid::cube(n).unwrap();
        let calc = Calculus::new(grid, CalculusMode::Spectral);
        let f = ScalarField::from_fn(grid, |x| x[0].sin() * x[1].cos() + (2.0 * x[2]).sin());
        c.bench_function(&format!("spectral laplacian {n}^3"), |b| b.iter(|| calc.laplacian(black_box(&f)).unwrap()));
    }
}

fn right_hand_side(c: &mut Criterion) {
    for mode in [CalculusMode::Spectral, CalculusMode::FiniteDifference] {
        let (calc, p, state) = setup(32, mode);
        c.bench_function(&format!("rhs 32^3 {mode}"), |b| b.iter(|| rhs(&calc, black_box(&state), &p).unwrap()));
    }
}

fn rk4_step(c: &mut Criterion) {
    let (calc, p, state) = setup(32, CalculusMode::Spectral);
    let mut group = c.benchmark_group("rk4");
    group.sample_size(10);
    group.bench_function("step 32^3 spectral", |b| {
        b.iter(|| step_with_dt(&calc, black_box(&state), &p, Projection::PerStep, 1e-4).unwrap())
    });
    group.finish();
}

criterion_group!(benches, laplacian, right_hand_side, rk4_step);
criterion_main!(benches);
