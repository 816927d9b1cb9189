//! Input builders shared by the benchmarks.

use aqa_core::data::ClipFeatureSequence;
use aqa_core::{Activation, ModelConfig, SiameseParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Clip count and feature size of the diving setup.
pub const CLIPS: usize = 9;
pub const DIM: usize = 64;

pub fn sequence(seed: u64, clips: usize, dim: usize) -> ClipFeatureSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..clips * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    ClipFeatureSequence::new(values, dim).expect("non-empty sequence")
}

pub fn model(hidden: usize, seed: u64) -> SiameseParams {
    let config = ModelConfig {
        input_dim: DIM,
        hidden,
        activation: Activation::Relu,
    };
    SiameseParams::init(config, seed).expect("valid model config")
}
