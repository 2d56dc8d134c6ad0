use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use gzsl_bench::desk_world;
use gzsl_core::trainer::{Mode, StepBatch, TrainConfig, Trainer};

fn train_step(c: &mut Criterion) {
    let ds = desk_world(0);
    let mut group = c.benchmark_group("train_step");
    group.sample_size(20);
    for mode in [Mode::GenOnly, Mode::SeBasic, Mode::SeEmbed, Mode::CeFull] {
        let cfg = TrainConfig {
            mode,
            ..Default::default()
        };
        let trainer = Trainer::new(&ds, &cfg).unwrap();
        group.bench_function(mode.as_str(), |b| {
            b.iter_batched(|| trainer.clone(), |mut t| black_box(t.step(&ds).unwrap()), BatchSize::SmallInput)
        });
    }
    group.finish();
}

fn batch_draw(c: &mut Criterion) {
    let ds = desk_world(0);
    let cfg = TrainConfig::default();
    let mut rng = gzsl_core::rng_from_seed(1);
    c.bench_function("step_batch_draw", |b| b.iter(|| black_box(StepBatch::draw(&ds, &cfg, &mut rng).unwrap())));
}

criterion_group!(benches, train_step, batch_draw);
criterion_main!(benches);
