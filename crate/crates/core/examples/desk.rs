//! Trains every mode on a few synthetic worlds and prints U/S/H.
//!
//! `cargo run --release -p gzsl-core --example desk -- [epochs] [seeds] [modes] [sigma] [config patch JSON] [first seed]`

use std::time::Instant;

use gzsl_core::dataset::{make_synthetic_world, SyntheticWorldSpec};
use gzsl_core::trainer::{run_pipeline, Mode, TrainConfig};

fn main() -> gzsl_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let modes: Vec<Mode> = match args.get(3) {
        Some(list) => list.split(',').map(|m| m.parse()).collect::<Result<_, _>>()?,
        None => Mode::ALL.to_vec(),
    };
    let sigma: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let patch: serde_json::Value = match args.get(5) {
        Some(p) => serde_json::from_str(p)?,
        None => serde_json::json!({}),
    };
    let first: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut sums = vec![0.0; modes.len()];
    for seed in first..first + seeds {
        let world = make_synthetic_world(&SyntheticWorldSpec {
            seed,
            noise_sigma: sigma,
            ..Default::default()
        })?;
        println!("seed {seed}: oracle {:?}", world.oracle);
        for (k, &mode) in modes.iter().enumerate() {
            let mut base = serde_json::to_value(TrainConfig {
                mode,
                epochs,
                seed,
                ..Default::default()
            })?;
            for (k, v) in patch.as_object().into_iter().flatten() {
                base[k] = v.clone();
            }
            let cfg: TrainConfig = serde_json::from_value(base)?;
            let t = Instant::now();
            let out = run_pipeline(&world.dataset, &cfg)?;
            sums[k] += out.report.h.unwrap() / seeds as f64;
            let first = out.log.first().map(|r| r.l_gen).unwrap_or(f64::NAN);
            let last = out.log.last().map(|r| r.l_gen).unwrap_or(f64::NAN);
            println!(
                "  {:<12} U={:.3} S={:.3} H={:.3} czsl={:.3} gen {:.3}->{:.3} ({:.1}s)",
                mode.as_str(),
                out.report.u.unwrap(),
                out.report.s.unwrap(),
                out.report.h.unwrap(),
                out.report.czsl_top1,
                first,
                last,
                t.elapsed().as_secs_f64()
            );
        }
    }
    for (m, h) in modes.iter().zip(&sums) {
        println!("mean H {:<12} {h:.3}", m.as_str());
    }
    Ok(())
}
