use std::collections::BTreeSet;
use std::hint::black_box;

use aqa_bench::{model, sequence, CLIPS, DIM};
use aqa_core::feedback::FeedbackReport;
use aqa_core::siamese::pair_loss_and_grad;
use aqa_core::{precision_recall, spearman_rho};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn embedding(c: &mut Criterion) {
    let seq = sequence(1, CLIPS, DIM);
    let mut group = c.benchmark_group("embed");
    for hidden in [32, 256] {
        let params = model(hidden, 2);
        group.bench_with_input(BenchmarkId::from_parameter(hidden), &params, |b, p| {
            b.iter(|| p.embed(black_box(&seq)).unwrap())
        });
    }
    group.finish();
}

fn pair_gradient(c: &mut Criterion) {
    let p = sequence(3, CLIPS, DIM);
    let q = sequence(4, CLIPS, DIM);
    let mut group = c.benchmark_group("pair_loss_and_grad");
    for hidden in [32, 256] {
        let params = model(hidden, 5);
        group.bench_with_input(BenchmarkId::from_parameter(hidden), &params, |b, m| {
            b.iter(|| pair_loss_and_grad(m, black_box(&p), black_box(&q), 1).unwrap())
        });
    }
    group.finish();
}

fn feedback(c: &mut Criterion) {
    let params = model(32, 6);
    let expert = sequence(7, CLIPS, DIM);
    let test = sequence(8, CLIPS, DIM);
    c.bench_function("feedback_report_9_clips", |b| {
        b.iter(|| FeedbackReport::compute(&params, "test", black_box(&test), "expert", &expert, 0.5).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let pred: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 * 0.1).collect();
    let truth: Vec<f64> = (0..1000).map(|i| ((i * 104729) % 997) as f64).collect();
    c.bench_function("spearman_rho_1000", |b| b.iter(|| spearman_rho(black_box(&pred), black_box(&truth)).unwrap()));
    let predicted: BTreeSet<usize> = (0..2000).step_by(3).collect();
    let truth_set: BTreeSet<usize> = (0..2000).step_by(5).collect();
    c.bench_function("precision_recall_2000", |b| {
        b.iter(|| precision_recall(black_box(&predicted), black_box(&truth_set)))
    });
}

criterion_group!(benches, embedding, pair_gradient, feedback, metrics);
criterion_main!(benches);
