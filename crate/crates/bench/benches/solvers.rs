use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use psireco::dynamics::ode_solve;
use psireco::recursion::BaseFlow;
use psireco::*;
use psireco_bench::fixture;

fn bullet_flow(c: &mut Criterion) {
    let mut group = c.benchmark_group("flow_bullet");
    for n in [4, 8, 12] {
        let f = fixture(n);
        let flow = BulletFlow::from_psi(&f.space, &f.psi).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| flow.apply_weights(f.initial.weights(), 1.0).unwrap()));
    }
    group.finish();
}

fn ode(c: &mut Criterion) {
    let mut group = c.benchmark_group("ode");
    group.sample_size(20);
    for n in [3, 6, 9] {
        let f = fixture(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| ode_solve(&f.space, &f.initial, 1.0, &f.psi, &f.rates, &OdeConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn recursion(c: &mut Criterion) {
    let mut group = c.benchmark_group("recursion");
    group.sample_size(10);
    for n in [3, 5, 7] {
        let f = fixture(n);
        let ordering = SiteOrdering::default_for(n, f.space.active_site()).unwrap();
        let cfg = RecursionConfig { grid: 256, base: BaseFlow::Bullet, override_assumption: false };
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| truncated_solve(&f.space, &f.initial, 1.0, &f.psi.bullet(), &f.rates, &ordering, n - 1, &cfg).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo_10k");
    group.sample_size(10);
    let f = fixture(5);
    let clock = ClockProcess::new(BulletFlow::from_psi(&f.space, &f.psi.bullet()).unwrap());
    group.bench_function("glpp_clock", |b| {
        b.iter(|| duality_estimate(&f.space, &f.initial, 1.0, &f.rates, &clock, &DualityConfig::new(10_000, 1)).unwrap())
    });
    group.bench_function("aig", |b| b.iter(|| aig_estimate(&f.space, &f.initial, 1.0, &f.psi, &f.rates, 10_000, 1).unwrap()));
    group.finish();
}

criterion_group!(benches, bullet_flow, ode, recursion, monte_carlo);
criterion_main!(benches);
