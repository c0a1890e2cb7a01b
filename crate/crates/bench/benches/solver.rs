use criterion::{criterion_group, criterion_main, Criterion};
use postprice::{build_optimal, solve_optimal, CostModel, Setup};
use postprice_bench::quadratic_setups;

fn solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_optimal");
    group.sample_size(10);
    for (name, setup) in quadratic_setups() {
        group.bench_function(name, |b| b.iter(|| solve_optimal(&setup, 1e-8).unwrap()));
    }
    let linear = Setup::classify(CostModel::Linear { q: 0.1 }, 0.2, 2.0).unwrap();
    group.bench_function("linear", |b| b.iter(|| solve_optimal(&linear, 1e-8).unwrap()));
    group.finish();
}

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_optimal");
    group.sample_size(10);
    for (name, setup) in quadratic_setups() {
        let params = solve_optimal(&setup, 1e-8).unwrap();
        group.bench_function(name, |b| b.iter(|| build_optimal(&setup, Some(&params)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, solve, build);
criterion_main!(benches);
