//! Deterministic synthetic scenes shared by the integration tests.

use doodle_core::{SemanticMap, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LABEL_A: [f32; 3] = [255.0, 0.0, 0.0];
pub const LABEL_B: [f32; 3] = [0.0, 0.0, 255.0];

pub fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| rng.gen_range(lo..hi))
}

/// Diagonal warm stripes.
fn stripes(c: usize, y: usize, x: usize) -> f32 {
    let phase = ((x + 2 * y) % 8) as f32 / 8.0;
    let base = [200.0, 120.0, 60.0][c];
    base + 45.0 * (phase * std::f32::consts::TAU).sin()
}

/// Cool blobs on a checker lattice.
fn dots(c: usize, y: usize, x: usize) -> f32 {
    let (cy, cx) = ((y % 6) as f32 - 2.5, (x % 6) as f32 - 2.5);
    let r2 = cy * cy + cx * cx;
    let base = [50.0, 110.0, 190.0][c];
    base + if r2 < 4.0 { 50.0 } else { -30.0 }
}

fn label_map(h: usize, w: usize, split: usize) -> SemanticMap {
    SemanticMap::new(Tensor::from_fn(3, h, w, |c, _, x| {
        if x < split {
            LABEL_A[c]
        } else {
            LABEL_B[c]
        }
    }))
}

/// Two-region scene: label A on the left half and label B on the right half of
/// both images. The style image paints A with stripes and B with dots, while
/// the content image swaps them, so unannotated matching crosses labels.
pub struct TwoRegion {
    pub content: Tensor,
    pub style: Tensor,
    pub content_map: SemanticMap,
    pub style_map: SemanticMap,
}

pub fn two_region(size: usize, seed: u64) -> TwoRegion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = size / 2;
    let noise = random_tensor(&mut rng, 3, size, size, -6.0, 6.0);
    let style = Tensor::from_fn(3, size, size, |c, y, x| {
        let v = if x < half { stripes(c, y, x) } else { dots(c, y, x) };
        (v + noise.at(c, y, x)).clamp(0.0, 255.0)
    });
    let noise = random_tensor(&mut rng, 3, size, size, -6.0, 6.0);
    let content = Tensor::from_fn(3, size, size, |c, y, x| {
        let v = if x < half { dots(c, y, x) } else { stripes(c, y, x) };
        (v + noise.at(c, y, x)).clamp(0.0, 255.0)
    });
    TwoRegion {
        content,
        style,
        content_map: label_map(size, size, half),
        style_map: label_map(size, size, half),
    }
}

/// Label index (0 = A, 1 = B) of a 3-channel label map cell, or `None` when blended.
pub fn label_of(map: &Tensor, y: usize, x: usize) -> Option<usize> {
    let v: Vec<f32> = (0..3).map(|c| map.at(c, y, x)).collect();
    if v.iter().zip(LABEL_A).all(|(a, b)| (a - b).abs() < 1e-3) {
        Some(0)
    } else if v.iter().zip(LABEL_B).all(|(a, b)| (a - b).abs() < 1e-3) {
        Some(1)
    } else {
        None
    }
}

/// Small random scene with a one-channel map, for gradient checks.
pub struct Tiny {
    pub content: Tensor,
    pub style: Tensor,
    pub content_map: SemanticMap,
    pub style_map: SemanticMap,
    pub image: Tensor,
}

pub fn tiny(size: usize, seed: u64) -> Tiny {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let smooth = |rng: &mut ChaCha8Rng| {
        let base = random_tensor(rng, 3, size, size, 0.0, 255.0);
        let (a, b) = (rng.gen_range(0.1..0.5), rng.gen_range(0.1..0.5));
        Tensor::from_fn(3, size, size, |c, y, x| {
            (0.5 * base.at(c, y, x) + 60.0 * ((a * x as f32) + (b * y as f32) + c as f32).sin() + 64.0)
                .clamp(0.0, 255.0)
        })
    };
    let content = smooth(&mut rng);
    let style = smooth(&mut rng);
    let image = smooth(&mut rng);
    let map = |rng: &mut ChaCha8Rng| {
        let cut = rng.gen_range(size / 4..3 * size / 4);
        SemanticMap::new(Tensor::from_fn(1, size, size, |_, y, x| if x + y / 2 < cut { 0.0 } else { 255.0 }))
    };
    let content_map = map(&mut rng);
    let style_map = map(&mut rng);
    Tiny {
        content,
        style,
        content_map,
        style_map,
        image,
    }
}
