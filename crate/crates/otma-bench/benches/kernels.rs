use criterion::{criterion_group, criterion_main, Criterion};
use otma_bench::{assignment_clouds, ellipse_state};
use otma_core::oracle::optimal_assignment;
use otma_core::target::{hamiltonian, ConvexTarget, DirectionSet};
use otma_core::{Mat2, Vec2};
use std::hint::black_box;

fn residual_assembly(c: &mut Criterion) {
    let (problem, u) = ellipse_state(64);
    c.bench_function("assemble residual 64x64", |b| {
        b.iter(|| problem.assemble(black_box(&u)).unwrap())
    });
}

fn jacobian_assembly(c: &mut Criterion) {
    let (problem, u) = ellipse_state(64);
    let asm = problem.assemble(&u).unwrap();
    c.bench_function("assemble jacobian 64x64", |b| {
        b.iter(|| problem.jacobian(black_box(&u), black_box(&asm)).unwrap())
    });
}

fn hamiltonian_sweep(c: &mut Criterion) {
    let target = ConvexTarget::ellipse(Mat2::new(0.6, 0.2, 0.2, 0.8), 256).unwrap();
    let dirs = DirectionSet::uniform(std::f64::consts::PI / 64.0).unwrap();
    let gradients: Vec<Vec2> = (0..1024)
        .map(|k| {
            let t = k as f64 * 0.0061359;
            Vec2::new(1.4 * t.cos(), 1.4 * (1.7 * t).sin())
        })
        .collect();
    c.bench_function("hamiltonian 1024 gradients", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for g in &gradients {
                acc += hamiltonian(black_box(*g), &target, &dirs);
            }
            acc
        })
    });
}

fn assignment(c: &mut Criterion) {
    let (src, dst) = assignment_clouds(100);
    c.bench_function("optimal assignment m=100", |b| {
        b.iter(|| optimal_assignment(black_box(&src), black_box(&dst)).unwrap())
    });
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(20);
    targets = residual_assembly, jacobian_assembly, hamiltonian_sweep, assignment
}
criterion_main!(kernels);
