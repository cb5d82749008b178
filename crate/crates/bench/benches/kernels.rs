use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use clfd_bench::wave_task;
use clfd_core::nn::{Activation, Architecture, ParamVector};
use clfd_core::node::{node_loss_and_grad, predict_node, NodeConfig, Solver};
use clfd_core::strategies::{hn_generate, HypernetConfig};
use clfd_core::traj_metrics::{discrete_frechet, dtw};

fn node_config(solver: Solver) -> NodeConfig {
    NodeConfig {
        architecture: Architecture::new(3, vec![64, 64], 2, Activation::Elu).unwrap(),
        time_input: true,
        train_iterations: 1,
        learning_rate: 1e-3,
        solver,
    }
}

fn params(cfg: &NodeConfig) -> ParamVector {
    let values = (0..cfg.param_count()).map(|i| 0.01 * ((i % 17) as f64 - 8.0)).collect();
    ParamVector::from_vec(&cfg.architecture, values).unwrap()
}

fn loss_and_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("node/loss_and_grad");
    for steps in [25, 100] {
        let task = wave_task(3, steps);
        let cfg = node_config(Solver::Euler);
        let p = params(&cfg);
        group.throughput(Throughput::Elements(steps as u64));
        group.bench_with_input(BenchmarkId::from_parameter(steps), &task, |b, task| {
            b.iter(|| node_loss_and_grad(black_box(&p), &cfg, task, None).unwrap())
        });
    }
    group.finish();
}

fn integration(c: &mut Criterion) {
    let task = wave_task(1, 100);
    let mut group = c.benchmark_group("node/predict");
    for solver in [Solver::Euler, Solver::Rk4] {
        let cfg = node_config(solver);
        let p = params(&cfg);
        group.bench_function(format!("{solver:?}"), |b| {
            b.iter(|| predict_node(&p, &cfg, black_box(&[-1.0, 0.0]), task.timestamps(), None).unwrap())
        });
    }
    group.finish();
}

fn trajectory_metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for steps in [100, 400] {
        let a = wave_task(2, steps);
        let (x, y) = (&a.demos()[0], &a.demos()[1]);
        group.bench_with_input(BenchmarkId::new("dtw", steps), &steps, |b, _| b.iter(|| dtw(x, y).unwrap()));
        group.bench_with_input(BenchmarkId::new("frechet", steps), &steps, |b, _| {
            b.iter(|| discrete_frechet(x, y).unwrap())
        });
    }
    group.finish();
}

fn hypernetwork(c: &mut Criterion) {
    let target = node_config(Solver::Euler).architecture;
    let mut group = c.benchmark_group("hypernetwork/generate");
    for (name, chunking) in [("full", None), ("chunked", Some((512, 8)))] {
        let cfg = HypernetConfig::new(target.clone(), 16, vec![32, 32], Activation::Relu, 0.005, chunking).unwrap();
        let h: Vec<f64> = (0..cfg.h_len()).map(|i| 0.01 * ((i % 13) as f64 - 6.0)).collect();
        let e = vec![0.1; 16];
        group.bench_function(name, |b| b.iter(|| hn_generate(black_box(&h), &e, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, loss_and_gradient, integration, trajectory_metrics, hypernetwork);
criterion_main!(benches);
