use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use chainflow::baselines::{frank_wolfe_oracle, OracleParams};
use chainflow::gp::{run_gp, GpParams};
use chainflow::marginal::compute_marginals_with;
use chainflow::model::solve_traffic_with;
use chainflow::scenarios::{generate, ScenarioConfig, Topology};
use chainflow::{initial_strategy, Exec, Instance};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn instances() -> Vec<(&'static str, Instance)> {
    [Topology::Geant, Topology::SmallWorld]
        .into_iter()
        .map(|t| (t.name(), generate(&ScenarioConfig::table(t).with_seed(1)).unwrap()))
        .filter(|(_, inst)| initial_strategy(inst).is_ok())
        .collect()
}

fn traffic_and_marginals(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate");
    for (name, inst) in instances() {
        let phi = initial_strategy(&inst).unwrap();
        for (mode, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(format!("traffic/{mode}"), name), &exec, |b, &exec| {
                b.iter(|| solve_traffic_with(black_box(&inst), black_box(&phi), exec).unwrap())
            });
            let flow = solve_traffic_with(&inst, &phi, exec).unwrap();
            group.bench_with_input(BenchmarkId::new(format!("marginals/{mode}"), name), &exec, |b, &exec| {
                b.iter(|| compute_marginals_with(black_box(&inst), &phi, &flow, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn optimizers(c: &mut Criterion) {
    let mut group = c.benchmark_group("optimize");
    group.sample_size(10);
    for (name, inst) in instances() {
        let phi = initial_strategy(&inst).unwrap();
        for (mode, exec) in MODES {
            let params = GpParams { max_iters: 20, exec, ..GpParams::default() };
            group.bench_with_input(BenchmarkId::new(format!("gp20/{mode}"), name), &params, |b, p| {
                b.iter(|| run_gp(black_box(&inst), p, &phi).unwrap())
            });
            let oracle = OracleParams { max_iters: 50, rel_gap_tol: None, exec, ..OracleParams::default() };
            group.bench_with_input(BenchmarkId::new(format!("oracle50/{mode}"), name), &oracle, |b, p| {
                b.iter(|| frank_wolfe_oracle(black_box(&inst), p).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, traffic_and_marginals, optimizers);
criterion_main!(benches);
