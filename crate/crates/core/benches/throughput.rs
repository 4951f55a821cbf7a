//! Throughput comparison of the data-parallel scan engine against its
//! sequential twin, at the single-scan level and across a replicate fitting
//! study. Both paths produce byte-identical datasets; these benches quantify
//! what the `parallel` feature buys on a given machine.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dfs_ramsey::estimation::{fit_damped_sinusoid, FitConfig};
use dfs_ramsey::exec;
use dfs_ramsey::ramsey::{run_plan_at_rate, run_plan_at_rate_serial, ExperimentPlan, NoiseModel};
use dfs_ramsey::rng::replicate_seed;
use dfs_ramsey::states::BellStateSpec;

const RATE: f64 = std::f64::consts::TAU * 33.35;

fn plan(points: usize, shots: u32, seed: u64) -> ExperimentPlan {
    let taus = (0..points)
        .map(|i| 0.3 * i as f64 / (points - 1) as f64)
        .collect();
    ExperimentPlan::new(taus, shots, seed, NoiseModel::default())
}

fn bench_single_scan(c: &mut Criterion) {
    let spec = BellStateSpec::psi1(0.9, 0.0);
    let mut group = c.benchmark_group("parity_scan");
    for &shots in &[100_u32, 2000] {
        let p = plan(60, shots, 7);
        group.bench_with_input(BenchmarkId::new("parallel", shots), &p, |b, p| {
            b.iter(|| run_plan_at_rate(p, &spec, RATE, 0.0).unwrap());
        });
        group.bench_with_input(BenchmarkId::new("serial", shots), &p, |b, p| {
            b.iter(|| run_plan_at_rate_serial(p, &spec, RATE, 0.0).unwrap());
        });
    }
    group.finish();
}

fn replicate_study(replicates: usize, parallel: bool) -> f64 {
    let spec = BellStateSpec::psi1(0.9, 0.0);
    let worker = |i: usize| {
        let p = plan(60, 100, replicate_seed(4242, i as u64));
        let ds = run_plan_at_rate_serial(&p, &spec, RATE, 0.0).unwrap();
        fit_damped_sinusoid(&ds.records, &FitConfig::default())
            .unwrap()
            .frequency
    };
    let freqs = if parallel {
        exec::indexed_map(replicates, worker)
    } else {
        exec::indexed_map_serial(replicates, worker)
    };
    freqs.iter().sum::<f64>() / replicates as f64
}

fn bench_replicate_fits(c: &mut Criterion) {
    let mut group = c.benchmark_group("replicate_fit_study");
    group.sample_size(10);
    let n = 16_usize;
    group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
        b.iter(|| replicate_study(n, true));
    });
    group.bench_with_input(BenchmarkId::new("serial", n), &n, |b, &n| {
        b.iter(|| replicate_study(n, false));
    });
    group.finish();
}

criterion_group!(benches, bench_single_scan, bench_replicate_fits);
criterion_main!(benches);
