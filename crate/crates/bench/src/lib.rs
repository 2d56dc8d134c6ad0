//! Shared fixtures for the benchmarks in `benches/`.

use gzsl_core::dataset::{make_synthetic_world, FeatureDataset, SyntheticWorldSpec};
use gzsl_core::nn::Mat;

/// The default desk world: 7 seen and 3 unseen classes, 32-d features.
pub fn desk_world(seed: u64) -> FeatureDataset {
    make_synthetic_world(&SyntheticWorldSpec {
        seed,
        ..Default::default()
    })
    .expect("default spec is valid")
    .dataset
}

pub fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    Mat::uniform(rows, cols, -1.0, 1.0, &mut gzsl_core::rng_from_seed(seed))
}

/// Rows scaled to unit length.
pub fn unit_rows(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut m = random_mat(rows, cols, seed);
    for i in 0..rows {
        let r = m.row_mut(i);
        let n = r.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-6);
        r.iter_mut().for_each(|v| *v /= n);
    }
    m
}
