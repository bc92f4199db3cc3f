//! Benchmarks for the hot paths: the word-tree walk (pruned and exhaustive),
//! the occupation-basis construction with its verification pass, and the
//! Hermitian eigensolver behind the density checks.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use carq_cli::commands::two_level_reference_scenario;
use carq_core::dynamics::{Automorphism, KernelVariant, Partition, PartitionKind, Scenario};
use carq_core::fock::build_fock_system;
use carq_core::kernel::{entropy_series, kernel_table};
use carq_core::linalg::hermitian_eig;
use carq_core::random::{random_density, random_rank1_projectors, random_unitary};

fn pruned_two_level(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel_table/two_level_pruned");
    for horizon in [6usize, 8, 10] {
        let s = two_level_reference_scenario(0.3, horizon).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(horizon), &s, |b, s| {
            b.iter(|| kernel_table(s).unwrap())
        });
    }
    group.finish();
}

fn exhaustive_random(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel_table/random_d3_exhaustive");
    for horizon in [4usize, 6] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = random_density(3, &mut rng);
        let u = random_unitary(3, &mut rng);
        let partition = Partition::new(
            random_rank1_projectors(3, &mut rng),
            PartitionKind::OrthogonalProjective,
        )
        .unwrap();
        let s = Scenario::new(
            rho,
            partition,
            Automorphism::new(u).unwrap(),
            KernelVariant::Car,
            horizon,
        )
        .unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(horizon), &s, |b, s| {
            b.iter(|| kernel_table(s).unwrap())
        });
    }
    group.finish();
}

fn entropy_series_two_level(c: &mut Criterion) {
    let s = two_level_reference_scenario(0.3, 8).unwrap();
    c.bench_function("entropy_series/two_level_horizon_8", |b| {
        b.iter(|| entropy_series(&s, 8).unwrap())
    });
}

fn fock_construction(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_fock_system");
    group.sample_size(10);
    for modes in [4usize, 8, 10] {
        group.bench_with_input(BenchmarkId::from_parameter(modes), &modes, |b, &m| {
            b.iter(|| build_fock_system(m).unwrap())
        });
    }
    group.finish();
}

fn eigensolver(c: &mut Criterion) {
    let mut group = c.benchmark_group("hermitian_eig");
    for dim in [8usize, 32, 64] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = random_density(dim, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &rho, |b, rho| {
            b.iter(|| hermitian_eig(rho).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    pruned_two_level,
    exhaustive_random,
    entropy_series_two_level,
    fock_construction,
    eigensolver
);
criterion_main!(benches);
