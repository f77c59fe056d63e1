use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ipevo::clade::BlockSampler;
use ipevo::ip::IntervalPartition;
use ipevo::par::{map_indices_with, ProcessingMode};
use ipevo::rng;
use ipevo::skewer::{evolve_seeded, EvolveConfig};
use ipevo::spindle::DiffusionParams;
use ipevo::sweep::{exit_coupled, ExitProcess};
use std::hint::black_box;

const MODES: [(&str, ProcessingMode); 2] = [("sequential", ProcessingMode::Sequential), ("parallel", ProcessingMode::Parallel)];

fn exit_replicates(c: &mut Criterion) {
    let p = DiffusionParams::besq(0.5).unwrap();
    let procs = [ExitProcess { start: 0.5, cutoff: 1e-3 }, ExitProcess { start: 0.5, cutoff: 4e-3 }];
    let mut g = c.benchmark_group("exit_replicates");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                let out = map_indices_with(mode, 512, |i| {
                    let mut r = rng::stream(1, "bench", i as u64);
                    exit_coupled(&p, &procs, 0.0, 1.0, 100_000_000, &mut r).unwrap()[0].below
                });
                black_box(out.iter().filter(|&&x| x).count())
            })
        });
    }
    g.finish();
}

fn evolve_blocks(c: &mut Criterion) {
    let p = DiffusionParams::besq(0.5).unwrap();
    let masses: Vec<f64> = (1..=64).map(|k| 1.0 / k as f64).collect();
    let beta = IntervalPartition::from_masses(0.5, &masses).unwrap();
    let levels: Vec<f64> = (0..=16).map(|k| 0.05 * k as f64).collect();
    let mut g = c.benchmark_group("evolve_64_blocks");
    g.sample_size(10);
    for (name, mode) in MODES {
        let cfg = EvolveConfig { eps: 1e-3, block: BlockSampler::Exact, n_grid: 64, mode, ..Default::default() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(evolve_seeded(&beta, &p, &levels, cfg, 3).unwrap().snapshots.len()))
        });
    }
    g.finish();
}

criterion_group!(benches, exit_replicates, evolve_blocks);
criterion_main!(benches);
