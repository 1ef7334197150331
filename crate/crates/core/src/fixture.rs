//! Deterministic generator for the default extractor weights.
//!
//! Filters are drawn from a seeded Gaussian, orthogonalized across their
//! fan-in, then normalized layer by layer on a synthetic calibration image so
//! each pre-activation channel has zero mean and unit variance. The result is
//! written to `assets/default.dfw` by the `gen_weights` example and embedded
//! into the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::extractor::FeatureExtractor;
use crate::layers::{conv3x3_forward, ConvLayer, LayerKind};
use crate::tensor::Tensor;

pub const DEFAULT_SEED: u64 = 0xD00D_1E5;

/// `(kind, out_channels)` of the default architecture; taps after layers 6 and 9.
const ARCH: &[(LayerKind, usize)] = &[
    (LayerKind::Conv, 16),
    (LayerKind::Relu, 0),
    (LayerKind::Conv, 16),
    (LayerKind::Relu, 0),
    (LayerKind::Pool, 0),
    (LayerKind::Conv, 32),
    (LayerKind::Relu, 0),
    (LayerKind::Pool, 0),
    (LayerKind::Conv, 32),
    (LayerKind::Relu, 0),
];
const TAPS: &[usize] = &[6, 9];

/// Pre-activation offset after normalization, in units of channel std.
const BIAS_OFFSET: f64 = 0.1;

/// A 64×64 image with smooth colour ramps, oriented stripes and blocky regions,
/// standing in for natural photo statistics in `[0, 255]`.
pub fn calibration_image(seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (64usize, 64usize);
    let noise: Vec<f32> = (0..3 * h * w).map(|_| rng.gen_range(-12.0..12.0)).collect();
    Tensor::from_fn(3, h, w, |c, y, x| {
        let (yf, xf) = (y as f32, x as f32);
        let ramp = 60.0 + 2.0 * (xf + (c as f32) * yf * 0.5);
        let stripes = 40.0 * ((0.35 + 0.1 * c as f32) * xf + 0.21 * yf).sin();
        let block = if (y / 16 + x / 21 + c) % 2 == 0 { 35.0 } else { -35.0 };
        (ramp + stripes + block + noise[(c * h + y) * w + x]).clamp(0.0, 255.0)
    })
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Gaussian rows made mutually orthogonal by Gram-Schmidt (requires `rows <= cols`).
fn orthogonal_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let mut m: Vec<f64> = (0..rows * cols).map(|_| gaussian(rng)).collect();
    for r in 0..rows {
        for p in 0..r {
            let dot: f64 = (0..cols).map(|i| m[r * cols + i] * m[p * cols + i]).sum();
            for i in 0..cols {
                m[r * cols + i] -= dot * m[p * cols + i];
            }
        }
        let norm = (0..cols).map(|i| m[r * cols + i].powi(2)).sum::<f64>().sqrt();
        for i in 0..cols {
            m[r * cols + i] /= norm;
        }
    }
    m
}

pub fn generate_default_net(seed: u64) -> FeatureExtractor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut act = calibration_image(seed ^ 0xca1);
    let mut layers = Vec::new();
    for &(kind, out) in ARCH {
        match kind {
            LayerKind::Conv => {
                let inp = act.channels();
                let fan_in = inp * 9;
                let raw = orthogonal_rows(&mut rng, out, fan_in);
                let probe = ConvLayer::new(
                    out,
                    inp,
                    raw.iter().map(|&v| v as f32).collect(),
                    vec![0.0; out],
                )
                .expect("shapes agree");
                let pre = conv3x3_forward(&act, &probe).expect("shapes agree");
                let mut weights = Vec::with_capacity(out * fan_in);
                let mut bias = Vec::with_capacity(out);
                for o in 0..out {
                    let plane = pre.plane(o);
                    let n = plane.len() as f64;
                    let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / n;
                    let var = plane.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
                    let std = var.sqrt().max(1e-6);
                    weights.extend(raw[o * fan_in..(o + 1) * fan_in].iter().map(|&v| (v / std) as f32));
                    bias.push((-mean / std + BIAS_OFFSET) as f32);
                }
                let conv = ConvLayer::new(out, inp, weights, bias).expect("shapes agree");
                act = conv3x3_forward(&act, &conv).expect("shapes agree");
                layers.push((LayerKind::Conv, Some(conv)));
            }
            LayerKind::Relu => {
                act = crate::layers::relu_forward(&act);
                layers.push((LayerKind::Relu, None));
            }
            LayerKind::Pool => {
                act = crate::layers::avgpool2x2_forward(&act);
                layers.push((LayerKind::Pool, None));
            }
        }
    }
    FeatureExtractor::new(layers, TAPS.to_vec()).expect("default architecture is consistent")
}
