//! Sequential vs rayon-parallel execution of the hot loops.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use solarwind_core::exec::{self, Mode};
use solarwind_core::hux::{self, HuxParams};
use solarwind_core::sfno::{self, SfnoConfig, TrainOptions};
use solarwind_core::sht::ShtPlan;
use solarwind_core::storage::{self, SynthConfig, Warp};
use solarwind_core::{RadialGrid, SphericalGrid};

const MODES: [(&str, Mode); 2] = [("sequential", Mode::Sequential), ("parallel", Mode::Parallel)];

fn synth_config(count: usize) -> SynthConfig {
    SynthConfig {
        seed: 1,
        count,
        radial: RadialGrid::heliospheric(40).unwrap(),
        grid: SphericalGrid::new(32, 64).unwrap(),
        l_band: 8,
        hux: HuxParams::default(),
        warp: Warp::DESK,
    }
}

fn bench_hux(c: &mut Criterion) {
    let cfg = synth_config(1);
    let boundary = storage::synth_boundary(7, &cfg.grid, 8).unwrap();
    let p = HuxParams::default();
    let mut g = c.benchmark_group("hux_f");
    for (name, mode) in MODES {
        exec::set_mode(mode);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| hux::hux_f(black_box(&boundary), &cfg.radial, &cfg.grid, &p).unwrap())
        });
    }
    g.finish();
}

fn bench_sht(c: &mut Criterion) {
    let grid = SphericalGrid::new(64, 128).unwrap();
    let plan = ShtPlan::new(&grid, 63, 64).unwrap();
    let channels = 32;
    let fields: Vec<f64> = (0..channels * grid.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut g = c.benchmark_group("sht_forward_many");
    for (name, mode) in MODES {
        exec::set_mode(mode);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| plan.forward_many(black_box(&fields), channels).unwrap())
        });
    }
    g.finish();
}

fn bench_synth(c: &mut Criterion) {
    let cfg = synth_config(8);
    let mut g = c.benchmark_group("synth_dataset");
    g.sample_size(10);
    for (name, mode) in MODES {
        exec::set_mode(mode);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| storage::synth_dataset(black_box(&cfg)).unwrap())
        });
    }
    g.finish();
}

fn bench_train_epoch(c: &mut Criterion) {
    let cfg = SynthConfig {
        radial: RadialGrid::heliospheric(20).unwrap(),
        grid: SphericalGrid::new(16, 32).unwrap(),
        ..synth_config(16)
    };
    let cubes: Vec<_> = storage::synth_dataset(&cfg)
        .unwrap()
        .into_iter()
        .map(|s| s.truth)
        .collect();
    let config = SfnoConfig {
        n_layers: 2,
        hidden: 16,
        l_max: 15,
        m_max: 16,
        out_channels: 19,
        ..SfnoConfig::default()
    };
    let opts = TrainOptions {
        epochs: 1,
        batch_size: 16,
        val_fraction: Some(0.0),
        ..TrainOptions::default()
    };
    let mut g = c.benchmark_group("train_epoch");
    g.sample_size(10);
    for (name, mode) in MODES {
        exec::set_mode(mode);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sfno::train_on_cubes(black_box(&cubes), &config, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_hux, bench_sht, bench_synth, bench_train_epoch);
criterion_main!(benches);
