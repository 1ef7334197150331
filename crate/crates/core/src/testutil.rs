use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

pub fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| rng.gen_range(lo..hi))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}
