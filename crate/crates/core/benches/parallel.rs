//! Data-parallel core against a single-thread pool. Build with
//! `--no-default-features` to measure the sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use stegscrub::analyzer::{Analyzer, AnalyzerConfig};
use stegscrub::eraser::{purify, EraserConfig, EraserMode};
use stegscrub::sweep::{self, Method, SweepOptions};
use stegscrub::{metrics, synth, PixelModel};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let build = |n: usize| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let default_threads = rayon::current_num_threads();
    let backend = if stegscrub::par::is_parallel() { "rayon" } else { "sequential" };
    let mut out = vec![(format!("{backend}-1"), build(1))];
    if default_threads > 1 {
        out.push((format!("{backend}-{default_threads}"), build(default_threads)));
    }
    out
}

fn bench(c: &mut Criterion) {
    let cfg = AnalyzerConfig {
        side: 32,
        ..AnalyzerConfig::default()
    };
    let model = Analyzer::initialized(&cfg).unwrap();
    let img = synth::natural(32, 1);
    let other = synth::natural(32, 2);
    let eraser = EraserConfig::new(4, EraserMode::Approx).unwrap();
    let pairs = sweep::synthetic_pairs(8, 32, 3, false);
    let opts = SweepOptions {
        epsilons: vec![2, 4],
        methods: vec![Method::OURS_APPROX, Method::GAUSSIAN, Method::WIENER],
        ..SweepOptions::default()
    };

    let mut group = c.benchmark_group("core");
    group.sample_size(20);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("pixel_distribution", &label), |b| {
            b.iter(|| pool.install(|| model.pixel_distribution(&img).unwrap()))
        });
        group.bench_function(BenchmarkId::new("purify_approx", &label), |b| {
            b.iter(|| pool.install(|| purify(&img, &model, &eraser).unwrap()))
        });
        group.bench_function(BenchmarkId::new("ssim", &label), |b| {
            b.iter(|| pool.install(|| metrics::ssim(&img, &other).unwrap()))
        });
        group.bench_function(BenchmarkId::new("sweep_8_images", &label), |b| {
            b.iter(|| pool.install(|| sweep::run_sweep_on(&pairs, Some(&model), &opts).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
