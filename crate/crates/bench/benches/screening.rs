use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use quotescrub_bench::{sketch_of, synthetic_text};
use quotescrub_core::extractor::extract_quotes;
use quotescrub_core::metrics::{lcs_char, levenshtein, minhash_sim};
use quotescrub_core::sketch::{BloomSketch, SketchParams};
use quotescrub_core::textnorm::normalize;

fn normalization(c: &mut Criterion) {
    let mut group = c.benchmark_group("normalize");
    for size in [1_000usize, 10_000, 100_000] {
        let text = synthetic_text(1, size).replace(' ', ",  ");
        group.throughput(Throughput::Bytes(text.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(size), &text, |b, t| {
            b.iter(|| normalize(black_box(t)))
        });
    }
    group.finish();
}

fn sketch_ops(c: &mut Criterion) {
    let keys: Vec<String> = (0..10_000).map(|i| format!("{i:025}")).collect();
    let params = SketchParams::plan(1_000_000, 0.001, 25, 0).unwrap();
    let mut group = c.benchmark_group("sketch");
    group.throughput(Throughput::Elements(keys.len() as u64));
    group.bench_function("insert", |b| {
        let mut sk = BloomSketch::new(params).unwrap();
        b.iter(|| {
            for k in &keys {
                sk.insert(black_box(k.as_bytes()));
            }
        })
    });
    let mut sk = BloomSketch::new(params).unwrap();
    keys.iter().for_each(|k| sk.insert(k.as_bytes()));
    group.bench_function("contains", |b| {
        b.iter(|| keys.iter().filter(|k| sk.contains(black_box(k.as_bytes()))).count())
    });
    group.finish();
}

fn extraction(c: &mut Criterion) {
    let docs: Vec<String> = (0..200).map(|i| synthetic_text(i, 5_000)).collect();
    let sk = sketch_of(&docs, 25, 0.001);
    let mut group = c.benchmark_group("extract_quotes");
    for size in [1_000usize, 10_000] {
        let mut response = synthetic_text(9_999, size / 2);
        response.push(' ');
        response.push_str(&docs[7][..size / 2]);
        group.throughput(Throughput::Bytes(response.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(size), &response, |b, r| {
            b.iter(|| extract_quotes(&sk, black_box(r)))
        });
    }
    group.finish();
}

fn reference_metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for size in [500usize, 2_000] {
        let a = synthetic_text(3, size);
        let b = synthetic_text(4, size);
        group.bench_with_input(BenchmarkId::new("lcs_char", size), &(&a, &b), |bch, (a, b)| {
            bch.iter(|| lcs_char(black_box(a), black_box(b)))
        });
        group.bench_with_input(BenchmarkId::new("levenshtein", size), &(&a, &b), |bch, (a, b)| {
            bch.iter(|| levenshtein(black_box(a), black_box(b)))
        });
        group.bench_with_input(BenchmarkId::new("minhash", size), &(&a, &b), |bch, (a, b)| {
            bch.iter(|| minhash_sim(black_box(a), black_box(b)))
        });
    }
    group.finish();
}

criterion_group!(benches, normalization, sketch_ops, extraction, reference_metrics);
criterion_main!(benches);
