//! Distance between generated and true class means after GAN-only training.
//!
//! `cargo run --release -p gzsl-core --example gan_probe -- [epochs] [lr] [non_saturating] [hidden]`

use gzsl_core::dataset::{make_synthetic_world, SyntheticWorldSpec};
use gzsl_core::generation::generate;
use gzsl_core::trainer::{Mode, TrainConfig, Trainer};

fn main() -> gzsl_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let ns: bool = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(true);
    let hidden: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(128);
    let d_steps: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1);
    let batch: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(64);
    let world = make_synthetic_world(&SyntheticWorldSpec::default())?;
    let ds = &world.dataset;
    let cfg = TrainConfig {
        mode: Mode::GenOnly,
        epochs,
        lr,
        non_saturating: ns,
        hidden,
        d_steps_per_g_step: d_steps,
        batch_size: batch,
        ..Default::default()
    };
    let mut t = Trainer::new(ds, &cfg)?;
    let mut log = Vec::new();
    for chunk in 0..5 {
        t.run_epochs(ds, epochs / 5, &mut log)?;
        let mut line = format!("after {:>4} epochs V={:.3}:", (chunk + 1) * epochs / 5, log.last().unwrap().v.unwrap());
        for c in 0..ds.semantic.num_classes() {
            let a = ds.semantic.rows_for(&vec![c as u32 + 1; 200])?;
            let x = generate(&t.nets.g, &a, &mut t.rng)?;
            let mean = x.sum_rows().scale(1.0 / 200.0);
            let err: f32 = mean
                .as_slice()
                .iter()
                .zip(world.class_means.row(c))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f32>()
                .sqrt();
            line += &format!(" {err:.2}");
        }
        println!("{line}");
    }
    let norms: Vec<f32> = world.class_means.iter_rows().map(|r| r.iter().map(|v| v * v).sum::<f32>().sqrt()).collect();
    println!("mean norms {norms:.1?}");
    Ok(())
}
