//! Parallel-vs-sequential throughput of the two hot loops: particle
//! simulation and a backward value sweep. The parallel side runs on a
//! default-size rayon pool, the sequential side on a one-thread pool, so
//! both exercise the identical code path.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use mfg_core::generator::{ControlSet, GeneratorSpec};
use mfg_core::measures::{EmpiricalMeasure, FlowOfProbabilities};
use mfg_core::simulator::{simulate, ControlPolicy, SimConfig};
use mfg_core::value::{solve_stochastic_value, GridConfig};
use mfg_core::TimeGrid;

fn bench_spec() -> GeneratorSpec {
    GeneratorSpec {
        dim: 1,
        controls: ControlSet::grid(&[-1.0], &[1.0], &[21]).unwrap(),
        diffusion: Some(Arc::new(|_t, _x, _m, _u, out: &mut [f64]| out[0] = 0.25)),
        drift: Arc::new(|_t, _x, _m, u, out: &mut [f64]| out[0] = u[0]),
        jumps: Vec::new(),
        running_payoff: Arc::new(|_t, x, m, u| {
            -0.5 * u[0] * u[0] - 0.5 * (x[0] - m.mean()[0]).powi(2)
        }),
        terminal_payoff: Arc::new(|x, m| -(x[0] - m.mean()[0]).powi(2)),
    }
}

fn flow() -> FlowOfProbabilities {
    let grid = TimeGrid::uniform(1.0, 50).unwrap();
    let pts: Vec<f64> = (0..100).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / 100.0).collect();
    FlowOfProbabilities::constant(grid, EmpiricalMeasure::uniform(pts, 1).unwrap())
}

fn pools() -> (rayon::ThreadPool, rayon::ThreadPool) {
    let par = rayon::ThreadPoolBuilder::new().build().unwrap();
    let seq = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    (par, seq)
}

fn simulate_benches(c: &mut Criterion) {
    let spec = bench_spec();
    let zeta = flow();
    let m0 = zeta.at_index(0).clone();
    let cfg = SimConfig::new(2000, 0.02, 7);
    let (par, seq) = pools();
    let mut group = c.benchmark_group("simulate_2000x50");
    group.bench_function("parallel", |b| {
        b.iter(|| {
            par.install(|| simulate(&spec, &ControlPolicy::Constant(10), &zeta, &m0, &cfg).unwrap())
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            seq.install(|| simulate(&spec, &ControlPolicy::Constant(10), &zeta, &m0, &cfg).unwrap())
        })
    });
    group.finish();
}

fn value_benches(c: &mut Criterion) {
    let spec = bench_spec();
    let zeta = flow();
    let cfg = GridConfig::new(3.0, 0.02);
    let (par, seq) = pools();
    let mut group = c.benchmark_group("value_sweep_301x50");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| par.install(|| solve_stochastic_value(&spec, &zeta, &cfg).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| seq.install(|| solve_stochastic_value(&spec, &zeta, &cfg).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, simulate_benches, value_benches);
criterion_main!(benches);
