use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use slowfast::ensemble::{run_ensemble, Execution};
use slowfast::scenario::load_fixture;
use slowfast::solver::SolverConfig;

fn ensemble_execution(c: &mut Criterion) {
    let sc = load_fixture("linear-slowfast").expect("fixture");
    let model = sc.build_model().expect("model");
    let init = sc.initial_state(&model, None).expect("init");
    let solver = SolverConfig { dt: 1e-3, ..sc.solver };
    let horizon = 0.5;

    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    for execution in [Execution::Sequential, Execution::Parallel] {
        let mut cfg = sc.ensemble_config();
        cfg.n_paths = 32;
        cfg.execution = execution;
        group.bench_with_input(BenchmarkId::new(format!("{execution:?}"), cfg.n_paths), &cfg, |b, cfg| {
            b.iter(|| run_ensemble(&model, &init, horizon, &solver, cfg).expect("ensemble"))
        });
    }
    group.finish();
}

fn single_path(c: &mut Criterion) {
    let sc = load_fixture("bus-model").expect("fixture");
    let model = sc.build_model().expect("model");
    let init = sc.initial_state(&model, None).expect("init");
    let mut group = c.benchmark_group("bus-model path");
    group.sample_size(10);
    group.bench_function("deterministic", |b| {
        b.iter(|| slowfast::simulate(&model, &init, sc.horizon, &sc.solver, None).expect("run"))
    });
    group.bench_function("stochastic", |b| {
        b.iter(|| {
            let mut rng = slowfast::RngStream::new(1, 0);
            slowfast::simulate(&model, &init, sc.horizon, &sc.solver, Some(&mut rng)).expect("run")
        })
    });
    group.finish();
}

criterion_group!(benches, ensemble_execution, single_path);
criterion_main!(benches);
