//! Parallel against sequential execution for the three data-parallel hot
//! paths: Monte Carlo trajectories, sector eigensolves, noise-draw surveys.
//! Without the `parallel` feature both arms run on one thread.

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fpsusy::nicolai::{winding_survey, ScanOptions};
use fpsusy::sde::{simulate, SimulateOptions};
use fpsusy::spectral::{eigensolve, SolveMode};
use fpsusy::{build_hamiltonian, builtin_flow, Execution, Grid, GridSpec, Metric};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn ou_line(nodes: usize) -> (Grid, fpsusy::FlowField, Metric) {
    let grid = Grid::build(&GridSpec::line(nodes, -6.0, 6.0)).unwrap();
    let flow = builtin_flow(&grid, "ou", &BTreeMap::new()).unwrap();
    (grid, flow, Metric::isotropic(1, 1.0).unwrap())
}

fn bench_simulate(c: &mut Criterion) {
    let (_, flow, metric) = ou_line(128);
    let opts = SimulateOptions::new(vec![1.0], 200, 0.005, 20_000, 1);
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| simulate(&flow, &metric, &opts, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_eigensolve(c: &mut Criterion) {
    let grid = Grid::build(&GridSpec::torus(10, 10)).unwrap();
    let params = BTreeMap::from([("vx".to_string(), 0.5), ("s".to_string(), 0.8)]);
    let flow = builtin_flow(&grid, "torus-shear", &params).unwrap();
    let h = build_hamiltonian(&grid, &Metric::isotropic(2, 1.0).unwrap(), &flow).unwrap();
    let mut g = c.benchmark_group("eigensolve");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| eigensolve(&h, SolveMode::Dense, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_winding(c: &mut Criterion) {
    let (_, flow, _) = ou_line(256);
    let seeds: Vec<u64> = (0..8).collect();
    let scan = ScanOptions::default();
    let mut g = c.benchmark_group("winding_survey");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| winding_survey(&flow, 1.0, &seeds, 200, 0.005, &scan, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_simulate, bench_eigensolve, bench_winding);
criterion_main!(benches);
