use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use kickwave_bench::{bench_env, bench_grid, random_values, zero_profile};
use kickwave_core::action::ActionParams;
use kickwave_core::hopf_lax::{evolve, evolve_one, quadratic_envelope};
use kickwave_core::minimizers::{OneSidedField, OneSidedParams};

fn envelope(c: &mut Criterion) {
    let mut group = c.benchmark_group("quadratic_envelope");
    for n in [1024usize, 4096, 16384] {
        let grid = bench_grid(n);
        let values = random_values(n, n as u64);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| quadratic_envelope(&values, &grid))
        });
    }
    group.finish();
}

fn kick_step(c: &mut Criterion) {
    let env = bench_env(17);
    let grid = bench_grid(8192);
    let w = zero_profile(grid);
    c.bench_function("evolve_one_8192", |b| {
        b.iter(|| evolve_one(&env, &w, ActionParams::default()).unwrap())
    });
}

fn multi_step(c: &mut Criterion) {
    let env = bench_env(23);
    let grid = bench_grid(4096);
    let w = zero_profile(grid);
    c.bench_function("evolve_32_steps_4096", |b| {
        b.iter(|| evolve(&env, &w, 32, ActionParams::default()).unwrap())
    });
}

fn one_sided_field(c: &mut Criterion) {
    let env = bench_env(31);
    let mut params = OneSidedParams::new(-32);
    params.policy.r_width = 2.0;
    c.bench_function("one_sided_field_h32", |b| {
        b.iter(|| OneSidedField::compute(&env, 0.0, 0, &params).unwrap())
    });
}

criterion_group!(benches, envelope, kick_step, multi_step, one_sided_field);
criterion_main!(benches);
