//! Parallel versus sequential execution of Monte Carlo trials.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pseudoko::parallel::Execution;
use pseudoko::simharness::{preset, run_experiment};
use pseudoko::theory::{mc_fixed_t_expectation, mc_sup_ratio, NullSignModel};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn sign_models(c: &mut Criterion) {
    let copies = NullSignModel::copies(5, 40).unwrap();
    let iid = NullSignModel::single_group(500).unwrap();
    let mut g = c.benchmark_group("sup_ratio_10k");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::new("copies_5x40", name), &mode, |b, &mode| {
            b.iter(|| black_box(mc_sup_ratio(&copies, 10_000, 1, mode)))
        });
        g.bench_with_input(BenchmarkId::new("iid_500", name), &mode, |b, &mode| {
            b.iter(|| black_box(mc_sup_ratio(&iid, 10_000, 2, mode)))
        });
    }
    g.finish();

    let groups = NullSignModel::independent_groups(5, 40).unwrap();
    let mut g = c.benchmark_group("fixed_t_100k");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| black_box(mc_fixed_t_expectation(&groups, 100_000, 3, mode)))
        });
    }
    g.finish();
}

fn experiment_trials(c: &mut Criterion) {
    let mut cfg = preset("sparsity").unwrap();
    cfg.sweep.values = vec![10.0];
    cfg.trials = 50;
    let mut g = c.benchmark_group("experiment_p100_50_trials");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| black_box(run_experiment(&cfg, mode).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, sign_models, experiment_trials);
criterion_main!(benches);
