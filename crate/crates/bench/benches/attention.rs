use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ttvsr_bench::{measure_similarity_macs, AttentionPath, AttnShape};
use ttvsr_core::motion::Flow;
use ttvsr_core::tensor::FeatureMap;
use ttvsr_core::tokenize::cross_scale_tokenize;
use ttvsr_core::trajectory::LocationMapStack;

fn attention_paths(c: &mut Criterion) {
    let mut group = c.benchmark_group("similarity_scan");
    for t in [4usize, 10] {
        let s = AttnShape::new(t, 16, 32, 32, 4, 4).unwrap();
        for (name, path) in [
            ("trajectory", AttentionPath::Trajectory),
            ("vanilla", AttentionPath::Vanilla),
        ] {
            group.bench_with_input(BenchmarkId::new(name, t), &s, |b, s| {
                b.iter(|| measure_similarity_macs(black_box(s), path, 7).unwrap())
            });
        }
    }
    group.finish();
}

fn location_map_update(c: &mut Criterion) {
    let flow = Flow::constant(64, 64, 0.5, -0.25).unwrap();
    c.bench_function("location_maps_10_frames_64x64", |b| {
        b.iter(|| {
            let mut stack = LocationMapStack::new(64, 64);
            for _ in 0..9 {
                stack.update(black_box(&flow)).unwrap();
            }
            stack
        })
    });
}

fn tokenization(c: &mut Criterion) {
    let f = FeatureMap::from_fn(16, 32, 32, |a, i, j| ((a + i * 3 + j * 5) % 17) as f32).unwrap();
    c.bench_function("cross_scale_tokenize_16x32x32", |b| {
        b.iter(|| cross_scale_tokenize(black_box(&f), &[4, 6, 8], 4).unwrap())
    });
}

criterion_group!(benches, attention_paths, location_map_update, tokenization);
criterion_main!(benches);
