use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hadamard_prox::invariants::{cat0_sweep, verify_space, VerifyOptions};
use hadamard_prox::prelude::*;
use hadamard_prox::sampling;
use nalgebra::DMatrix;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn spaces() -> Vec<Space> {
    vec![
        Space::euclidean(3).unwrap(),
        Space::hyperbolic(3).unwrap(),
        Space::spd(3).unwrap(),
        Space::tree(sampling::tree(&mut sampling::rng(1, 0), 32)),
    ]
}

fn cat0(c: &mut Criterion) {
    let mut group = c.benchmark_group("cat0_sweep_2000");
    for space in spaces() {
        for (mode, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(mode, space.name()), &space, |b, s| {
                b.iter(|| cat0_sweep(s, 2000, 7, exec))
            });
        }
    }
    group.finish();
}

fn verify(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify_200");
    group.sample_size(10);
    for space in spaces() {
        for (mode, execution) in MODES {
            let opts = VerifyOptions { budget: 200, seed: 7, execution };
            group.bench_with_input(BenchmarkId::new(mode, space.name()), &space, |b, s| {
                b.iter(|| verify_space(s, &[], &opts).unwrap())
            });
        }
    }
    group.finish();
}

fn flow_grid(c: &mut Criterion) {
    let s = Space::spd(2).unwrap();
    let i = s.spd_point(DMatrix::identity(2, 2)).unwrap();
    let f = Functional::weighted_sum(
        &s,
        vec![
            (1.0, Functional::squared_distance(&s, i.clone(), 1.0).unwrap()),
            (1.0, Functional::squared_distance(&s, s.spd_point(DMatrix::identity(2, 2) * 4.0).unwrap(), 1.0).unwrap()),
        ],
    )
    .unwrap();
    let mut group = c.benchmark_group("spd_flow_grid");
    group.sample_size(10);
    for (mode, execution) in MODES {
        let opts = FlowOptions { doubling_tolerance: 1e-6, execution, ..FlowOptions::default() };
        group.bench_function(mode, |b| b.iter(|| flow_convergence_run(&f, &i, &[1.0, 2.0, 4.0, 8.0], &opts).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, cat0, verify, flow_grid);
criterion_main!(benches);
