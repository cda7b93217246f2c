use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tpia_core::analysis::{solve_power_flow, solve_tpia, Objective};
use tpia_core::engine::{assemble_kkt_l1, assemble_kkt_l2, Formulation, Problem, SolverSettings};
use tpia_core::linalg::SparseLu;
use tpia_core::synthetic::{overloaded_feeder, random_radial_feeder, FeederSpec};
use tpia_core::Circuit;

fn solves(c: &mut Criterion) {
    let settings = SolverSettings::default();
    let mut group = c.benchmark_group("solve");
    for factor in [1.0, 10.0] {
        let net = overloaded_feeder(3, factor);
        group.bench_with_input(BenchmarkId::new("tpf", factor), &net, |b, net| {
            b.iter(|| solve_power_flow(black_box(net), &settings))
        });
        group.bench_with_input(BenchmarkId::new("l2", factor), &net, |b, net| {
            b.iter(|| solve_tpia(black_box(net), Objective::LeastSquares, None, &settings, None))
        });
        group.bench_with_input(BenchmarkId::new("l1", factor), &net, |b, net| {
            b.iter(|| solve_tpia(black_box(net), Objective::L1, None, &settings, None))
        });
    }
    group.finish();
}

/// Flat voltages, unit duals and small split sources.
fn start_point(problem: &Problem) -> Vec<f64> {
    let l = problem.layout();
    let mut z = vec![0.0; l.len()];
    for (k, v) in problem.circuit().flat_start().iter().enumerate() {
        z[l.v_re().start + k] = v.re;
        z[l.v_im().start + k] = v.im;
    }
    if l.formulation == Formulation::L1 {
        z[l.infeas()].fill(1e-3);
        z[l.mu()].fill(0.5);
    }
    z
}

fn kkt(c: &mut Criterion) {
    let mut group = c.benchmark_group("kkt");
    for n_buses in [50, 200] {
        let spec = FeederSpec {
            n_buses,
            ..FeederSpec::default()
        };
        let circuit = Circuit::new(&random_radial_feeder(1, &spec)).unwrap();
        let subset = Problem::default_subset(&circuit);
        let l2 = Problem::new(&circuit, Formulation::LeastSquares, &subset).unwrap();
        let l1 = Problem::new(&circuit, Formulation::L1, &subset).unwrap();
        let (z2, z1) = (start_point(&l2), start_point(&l1));
        group.bench_function(BenchmarkId::new("assemble_l2", n_buses), |b| {
            b.iter(|| assemble_kkt_l2(&l2, black_box(&z2), 1e-8).unwrap())
        });
        group.bench_function(BenchmarkId::new("assemble_l1", n_buses), |b| {
            b.iter(|| assemble_kkt_l1(&l1, black_box(&z1), 1e-3, 1e-8).unwrap())
        });
        let matrix = assemble_kkt_l2(&l2, &z2, 1e-8).unwrap().matrix;
        group.bench_function(BenchmarkId::new("lu_l2", n_buses), |b| {
            b.iter(|| SparseLu::factorize(black_box(&matrix)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, solves, kkt);
criterion_main!(benches);
