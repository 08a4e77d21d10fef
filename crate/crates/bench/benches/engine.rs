use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use nalgebra::DMatrix;
use truncsa::iterate::{run, RunOptions};
use truncsa::proofcheck::{series_variance, Grid};
use truncsa::{
    builtin, matrix_exp, run_ensemble, solve_lyapunov, CompactFamily, EnsembleConfig, GainSchedule,
    ProblemParams,
};

/// Symmetric part dominated by `d I`, so every instance is stable.
fn stable(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| {
        let off = ((i * 7 + j * 3) % 5) as f64 / 5.0 - 0.4;
        if i == j {
            d as f64 + off
        } else {
            off
        }
    })
}

fn trajectories(c: &mut Criterion) {
    const STEPS: u64 = 10_000;
    let mut group = c.benchmark_group("trajectory");
    group.throughput(Throughput::Elements(STEPS));
    let schedule = GainSchedule::new(1.0, 0.7).unwrap();
    for (label, params, d) in [
        (
            "linear_d1",
            ProblemParams::linear(vec![vec![2.0]], vec![1.0]),
            1,
        ),
        ("cubic_d2", ProblemParams::cubic(vec![0.5, -0.5]), 2),
        ("rotation_d2", ProblemParams::rotation(1.0, 2.0), 2),
    ] {
        let problem = builtin(&params).unwrap();
        let family = CompactFamily::ball(vec![0.0; d], 2.0, 2.0).unwrap();
        let x0 = vec![0.0; d];
        group.bench_function(label, |b| {
            b.iter(|| {
                run(
                    &problem,
                    &schedule,
                    &family,
                    &x0,
                    &RunOptions::new(STEPS, 1),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn linear_algebra(c: &mut Criterion) {
    let mut group = c.benchmark_group("linalg");
    for d in [2, 8, 32] {
        let a = stable(d);
        let sigma = DMatrix::identity(d, d);
        group.bench_with_input(BenchmarkId::new("matrix_exp", d), &a, |b, a| {
            b.iter(|| matrix_exp(black_box(&(-a * 0.1))).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("solve_lyapunov", d), &a, |b, a| {
            b.iter(|| solve_lyapunov(black_box(a), &sigma).unwrap())
        });
    }
    group.finish();
}

fn series(c: &mut Criterion) {
    let q = stable(2);
    let sigma = DMatrix::identity(2, 2);
    let schedule = GainSchedule::new(1.0, 0.7).unwrap();
    c.bench_function("series_variance_n1000_d2", |b| {
        b.iter(|| {
            let mut grid = Grid::new(1000, schedule);
            series_variance(&mut grid, &q, &sigma, 1e-10).unwrap()
        })
    });
}

fn ensemble(c: &mut Criterion) {
    let cfg = EnsembleConfig {
        problem: ProblemParams::linear(vec![vec![2.0]], vec![1.0]),
        schedule: GainSchedule::new(1.0, 0.7).unwrap(),
        family: CompactFamily::ball(vec![0.0], 2.0, 2.0).unwrap(),
        x0: vec![0.0],
        n_steps: 2_000,
        replicates: 200,
        base_seed: 3,
        checkpoints: vec![1_000, 2_000],
        algorithm: Default::default(),
        eta: None,
    };
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    group.throughput(Throughput::Elements(cfg.n_steps * cfg.replicates as u64));
    group.bench_function("linear_m200_n2000", |b| {
        b.iter(|| run_ensemble(&cfg, 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, trajectories, linear_algebra, series, ensemble);
criterion_main!(benches);
