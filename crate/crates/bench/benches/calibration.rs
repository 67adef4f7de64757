use std::hint::black_box;

use aciq_core::distributions::sample;
use aciq_core::kld::{build_histogram, kld_threshold, DEFAULT_BINS};
use aciq_core::{optimal_alpha, quantize, AciqSetting, DistributionModel, Family, Mode, QuantGrid};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn solver(c: &mut Criterion) {
    let mut g = c.benchmark_group("optimal_alpha");
    for bits in [2, 4, 8] {
        for (name, setting) in [
            ("laplace", AciqSetting::laplace(1.0, bits, Mode::Symmetric).unwrap()),
            ("gaussian", AciqSetting::gaussian(1.0, bits, Mode::Symmetric).unwrap()),
        ] {
            g.bench_with_input(BenchmarkId::new(name, bits), &setting, |b, s| {
                b.iter(|| optimal_alpha(black_box(s)).unwrap())
            });
        }
    }
    g.finish();
}

fn calibration(c: &mut Criterion) {
    let xs = sample(&DistributionModel::laplace(1.0).unwrap(), 10_000, 5).unwrap();
    let mut g = c.benchmark_group("calibrate_10k");
    g.bench_function("aciq", |b| {
        b.iter(|| {
            let model = DistributionModel::fit(Family::Laplace, black_box(&xs)).unwrap().unwrap();
            AciqSetting::new(model.centered(), 4, Mode::Symmetric).unwrap().optimal_alpha().unwrap()
        })
    });
    g.bench_function("kld", |b| {
        b.iter(|| kld_threshold(&build_histogram(black_box(&xs), DEFAULT_BINS).unwrap(), 4).unwrap())
    });
    g.finish();
}

fn quantize_channel(c: &mut Criterion) {
    let xs = sample(&DistributionModel::laplace(1.0).unwrap(), 4096, 1).unwrap();
    let grid = QuantGrid::new(5.03, 4, Mode::Symmetric).unwrap();
    c.bench_function("quantize_4096", |b| {
        b.iter(|| black_box(&xs).iter().map(|&x| quantize(x, &grid)).sum::<f64>())
    });
}

criterion_group!(benches, solver, calibration, quantize_channel);
criterion_main!(benches);
