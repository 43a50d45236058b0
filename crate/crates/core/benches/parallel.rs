//! Data-parallel kernels on one worker against the full pool.
//!
//! `cargo bench` times both pool sizes; `cargo bench --no-default-features`
//! times the sequential fallback build.

use std::f64::consts::TAU;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drift_core::maps::{check_symplectic, PerturbationStep, TrigTerm};
use drift_core::nhim::compute_cylinder;
use drift_core::par::{current_num_threads, with_threads};
use drift_core::transport::brute_force_reachability;
use drift_core::transport::synthetic::random_instance;
use drift_core::{MapDef, PhasePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pools() -> Vec<(&'static str, usize)> {
    if cfg!(feature = "parallel") {
        vec![("one_thread", 1), ("all_threads", current_num_threads())]
    } else {
        vec![("sequential", 1)]
    }
}

fn coupled() -> MapDef {
    MapDef::product(4.0).with_step(PerturbationStep::new(1e-3, vec![TrigTerm::sin(1, -1, 1.0)]))
}

fn cylinder(c: &mut Criterion) {
    let map = coupled();
    let mut g = c.benchmark_group("cylinder_128x32");
    g.sample_size(10);
    for (name, n) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                with_threads(n, || {
                    compute_cylinder(&map, (0.05, 0.35), 128, 32, 1e-9, 200).unwrap()
                })
            })
        });
    }
    g.finish();
}

fn symplectic(c: &mut Criterion) {
    let map = coupled();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<PhasePoint> = (0..20_000)
        .map(|_| {
            PhasePoint::new(
                rng.random_range(0.0..TAU),
                rng.random_range(0.05..0.35),
                rng.random_range(0.0..TAU),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let mut g = c.benchmark_group("symplectic_20k");
    for (name, n) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_threads(n, || check_symplectic(&map, &pts, 1e-9).unwrap()))
        });
    }
    g.finish();
}

fn reachability(c: &mut Criterion) {
    let inst = random_instance(3, 200);
    let mut g = c.benchmark_group("reachability_200x200");
    g.sample_size(10);
    for (name, n) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                with_threads(n, || {
                    brute_force_reachability(&inst.ifs, 200, 200, &inst.gamma_minus, 1e-3)
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, cylinder, symplectic, reachability);
criterion_main!(benches);
