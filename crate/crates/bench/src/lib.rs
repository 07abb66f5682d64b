//! Deterministic fixtures shared by the benchmarks.

use attnga_core::data::Sample;
use attnga_core::seed::rng_from_seed;
use attnga_core::{Architecture, AttentionClassifier, Tensor};
use rand::Rng;

/// Uniform values in [-1, 1).
pub fn feature_map(shape: [usize; 3], seed: u64) -> Tensor {
    let mut rng = rng_from_seed(seed);
    let len = shape.iter().product();
    Tensor::new(&shape, (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect()).expect("valid fixture")
}

/// Alternating labels over random feature maps.
pub fn samples(n: usize, shape: [usize; 3], seed: u64) -> Vec<Sample> {
    (0..n)
        .map(|i| Sample {
            features: feature_map(shape, seed.wrapping_add(i as u64)),
            label: (i % 2) as u8,
        })
        .collect()
}

pub fn model(kernel_size: usize, arch: &str, channels: usize, seed: u64) -> AttentionClassifier {
    let arch: Architecture = arch.parse().expect("valid architecture");
    AttentionClassifier::init(kernel_size, &arch, channels, &mut rng_from_seed(seed)).expect("valid model")
}
