use std::hint::black_box;

use attackkf_bench::Fixture;
use attackkf_core::filter::{filter_pass, proposed_kf_rtss, standard_kf_rtss};
use attackkf_core::gslr::{gslr_params, mc_moment_oracle, predicted_moments};
use attackkf_core::sim::{run_monte_carlo, simulate_run};
use attackkf_core::{FilterOptions, Method, MomentForm};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn moments(c: &mut Criterion) {
    let f = Fixture::paper();
    let mut g = c.benchmark_group("moments");
    g.bench_function("predicted_moments", |b| {
        b.iter(|| predicted_moments(black_box(&f.prior), &f.theta, MomentForm::Exact).unwrap())
    });
    g.bench_function("gslr_params", |b| {
        b.iter(|| gslr_params(black_box(&f.prior), &f.theta).unwrap())
    });
    g.sample_size(10);
    g.throughput(Throughput::Elements(100_000));
    g.bench_function("mc_oracle_1e5", |b| {
        b.iter(|| mc_moment_oracle(&f.prior, &f.theta, 100_000, black_box(1)).unwrap())
    });
    g.finish();
}

fn passes(c: &mut Criterion) {
    let f = Fixture::paper();
    let init = &f.scenario.init_estimator;
    let ys = &f.measurements;
    let mut g = c.benchmark_group("estimation_400_steps");
    g.throughput(Throughput::Elements(ys.len() as u64));
    g.bench_function("proposed_filter", |b| {
        b.iter(|| filter_pass(init, black_box(ys), &f.theta).unwrap())
    });
    g.bench_function("proposed_filter_smoother", |b| {
        b.iter(|| proposed_kf_rtss(init, black_box(ys), &f.theta, FilterOptions::default()).unwrap())
    });
    g.bench_function("standard_filter_smoother", |b| {
        b.iter(|| standard_kf_rtss(init, black_box(ys), &f.scenario.model).unwrap())
    });
    g.finish();
}

fn harness(c: &mut Criterion) {
    let f = Fixture::paper();
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    g.bench_function("simulate_run", |b| {
        b.iter(|| simulate_run(&f.scenario, black_box(3), FilterOptions::default()).unwrap())
    });
    for runs in [10, 100] {
        g.bench_with_input(BenchmarkId::new("run_monte_carlo", runs), &runs, |b, &runs| {
            b.iter(|| run_monte_carlo(&f.scenario, runs, &Method::ALL, 0).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, moments, passes, harness);
criterion_main!(benches);
