use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;

/// Uniform in `±sqrt(1 / fan_in)`, marked trainable.
pub fn uniform_fan_in(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape, data)
        .expect("initialiser shapes are non-empty")
        .with_grad()
}
