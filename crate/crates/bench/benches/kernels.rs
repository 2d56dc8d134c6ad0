use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use gzsl_bench::{random_mat, unit_rows};
use gzsl_core::embedding::{class_contrastive_from_scores, groups_from_labels, instance_contrastive_batch};
use gzsl_core::nn::{MlpBuilder, LEAKY_SLOPE};

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [32usize, 128, 256] {
        let a = random_mat(n, n, 1);
        let b = random_mat(n, n, 2);
        group.throughput(Throughput::Elements((n * n * n) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| black_box(a.matmul(&b).unwrap()))
        });
    }
    group.finish();
}

fn mlp_passes(c: &mut Criterion) {
    let mut group = c.benchmark_group("mlp");
    let mut rng = gzsl_core::rng_from_seed(3);
    // generator shape at desk scale: [noise | descriptor] -> 128 -> 32
    let mut net = MlpBuilder::new(16, &mut rng)
        .affine(128)
        .leaky_relu(LEAKY_SLOPE)
        .affine(32)
        .relu()
        .build()
        .unwrap();
    let x = random_mat(64, 16, 4);
    let up = random_mat(64, 32, 5);
    group.bench_function("infer_64", |b| b.iter(|| black_box(net.infer(&x).unwrap())));
    group.bench_function("forward_backward_64", |b| {
        b.iter(|| {
            net.forward(&x).unwrap();
            black_box(net.backward(&up).unwrap())
        })
    });
    group.finish();
}

fn losses(c: &mut Criterion) {
    let mut group = c.benchmark_group("losses");
    for n in [64usize, 256] {
        let z = unit_rows(n, 32, 6);
        let labels: Vec<u32> = (0..n).map(|i| (i % 7) as u32 + 1).collect();
        let groups = groups_from_labels(&labels);
        group.bench_with_input(BenchmarkId::new("instance_batch", n), &n, |b, _| {
            b.iter(|| black_box(instance_contrastive_batch(&z, &groups, 0.1).unwrap()))
        });
        let scores = random_mat(n, 7, 7);
        let pos: Vec<usize> = (0..n).map(|i| i % 7).collect();
        group.bench_with_input(BenchmarkId::new("class_scores", n), &n, |b, _| {
            b.iter(|| black_box(class_contrastive_from_scores(&scores, &pos, 0.1).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, mlp_passes, losses);
criterion_main!(benches);
