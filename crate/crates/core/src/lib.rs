//! Generalized zero-shot learning with a conditional feature generator fused
//! with a contrastive embedding model, on precomputed feature vectors.
//!
//! Module map:
//! - [`nn`]: matrices, MLPs, reverse mode, Adam, gradient checking
//! - [`dataset`]: GZSL data model, `gzb`/csv-bundle IO, synthetic worlds, per-class accuracy
//! - [`generation`]: conditional generator/discriminator and the adversarial value
//! - [`embedding`]: embedding, projection head, comparator and the loss families
//! - [`trainer`]: batch sampling, the alternating training loop, final classifier,
//!   evaluation and checkpoints

pub mod audit;
pub mod dataset;
pub mod embedding;
mod error;
pub mod generation;
pub mod nn;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod trainer;

pub use error::{Error, Result};

/// Deterministic generator used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
