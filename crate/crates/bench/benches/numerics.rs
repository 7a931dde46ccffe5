use std::hint::black_box;

use adia_core::linalg::{diagonalize, CMatrix};
use adia_core::{
    build_trajectory, evolve, reduce_search_to_2level, search_hamiltonian, InitialState, Schedule,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_hermitian(n: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = CMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = Complex64::from(rng.gen_range(-1.0..1.0));
        for j in i + 1..n {
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}

fn bench_diagonalize(c: &mut Criterion) {
    let mut group = c.benchmark_group("diagonalize");
    for n in [2, 8, 16] {
        let h = random_hermitian(n, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &h, |b, h| {
            b.iter(|| diagonalize(black_box(h)).unwrap())
        });
    }
    group.finish();
}

fn bench_trajectory(c: &mut Criterion) {
    let full = search_hamiltonian(4, Schedule::Linear).unwrap();
    let reduced = reduce_search_to_2level(&full).unwrap();
    let mut group = c.benchmark_group("build_trajectory");
    group.sample_size(10);
    group.bench_function("search16_k256", |b| b.iter(|| build_trajectory(black_box(&full), 256).unwrap()));
    group.bench_function("reduced_k1024", |b| {
        b.iter(|| build_trajectory(black_box(&reduced), 1024).unwrap())
    });
    group.finish();
}

fn bench_evolve(c: &mut Criterion) {
    let model = reduce_search_to_2level(&search_hamiltonian(4, Schedule::Linear).unwrap()).unwrap();
    let traj = build_trajectory(&model, 1024).unwrap();
    let mut group = c.benchmark_group("evolve");
    group.sample_size(10);
    for t in [100.0, 1000.0] {
        group.bench_with_input(BenchmarkId::new("reduced_linear", t), &t, |b, &t| {
            b.iter(|| evolve(&model, &traj, black_box(t), &InitialState::Track(0), 1e-10).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_diagonalize, bench_trajectory, bench_evolve);
criterion_main!(benches);
