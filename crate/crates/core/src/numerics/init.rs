//! Parameter initializers.

use rand::Rng;

use super::tensor::Tensor;

/// Glorot-uniform `[fan_in × fan_out]` matrix.
pub fn glorot_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Tensor::from_vec(&[fan_in, fan_out], data).expect("sized")
}

/// Embedding table with rows uniform in `[-0.05, 0.05]`.
pub fn embedding_uniform<R: Rng>(rows: usize, width: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * width).map(|_| rng.random_range(-0.05..=0.05)).collect();
    Tensor::from_vec(&[rows, width], data).expect("sized")
}
