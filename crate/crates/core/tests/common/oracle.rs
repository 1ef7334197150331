//! Independent `f64` reference implementations used as test oracles.
//!
//! These re-derive every quantity with plain nested loops in double
//! precision, sharing nothing with the library's kernels except the frozen
//! weights and the constant targets they are checked against.

use doodle_core::extractor::FeatureExtractor;
use doodle_core::layers::LayerSpec;
use doodle_core::optimize::LevelContext;
use doodle_core::{NNAssignment, Tensor};

#[derive(Debug, Clone)]
pub struct T64 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub d: Vec<f64>,
}

impl T64 {
    pub fn from_tensor(t: &Tensor) -> Self {
        let (c, h, w) = t.shape();
        T64 {
            c,
            h,
            w,
            d: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.d[(c * self.h + y) * self.w + x]
    }

    pub fn axpy(&self, s: f64, dir: &Tensor) -> T64 {
        let mut out = self.clone();
        for (o, &v) in out.d.iter_mut().zip(dir.data()) {
            *o += s * v as f64;
        }
        out
    }
}

fn conv64(x: &T64, weights: &[f32], bias: &[f32], out_c: usize) -> T64 {
    let mut d = vec![0.0; out_c * x.h * x.w];
    for o in 0..out_c {
        for y in 0..x.h {
            for xx in 0..x.w {
                let mut acc = bias[o] as f64;
                for c in 0..x.c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let sy = y as isize + ky as isize - 1;
                            let sx = xx as isize + kx as isize - 1;
                            if sy < 0 || sx < 0 || sy >= x.h as isize || sx >= x.w as isize {
                                continue;
                            }
                            acc += weights[((o * x.c + c) * 3 + ky) * 3 + kx] as f64
                                * x.at(c, sy as usize, sx as usize);
                        }
                    }
                }
                d[(o * x.h + y) * x.w + xx] = acc;
            }
        }
    }
    T64 { c: out_c, h: x.h, w: x.w, d }
}

fn pool64(x: &T64) -> T64 {
    let (h, w) = (x.h.div_ceil(2), x.w.div_ceil(2));
    let mut d = vec![0.0; x.c * h * w];
    for c in 0..x.c {
        for y in 0..h {
            for xx in 0..w {
                let mut s = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (sy, sx) = (2 * y + dy, 2 * xx + dx);
                        if sy < x.h && sx < x.w {
                            s += x.at(c, sy, sx);
                        }
                    }
                }
                d[(c * h + y) * w + xx] = s / 4.0;
            }
        }
    }
    T64 { c: x.c, h, w, d }
}

/// Activations at every tap of `net`, computed in double precision.
pub fn forward64(net: &FeatureExtractor, image: &T64) -> Vec<(String, T64)> {
    let taps = net.tap_names();
    let mut cur = image.clone();
    let mut out = Vec::new();
    for layer in net.layers() {
        cur = match layer {
            LayerSpec::Conv { conv, .. } => conv64(&cur, conv.weights(), conv.bias(), conv.out_channels()),
            LayerSpec::Relu { .. } => T64 {
                d: cur.d.iter().map(|v| v.max(0.0)).collect(),
                ..cur
            },
            LayerSpec::Pool { .. } => pool64(&cur),
        };
        if taps.iter().any(|t| t == layer.name()) {
            out.push((layer.name().to_string(), cur.clone()));
        }
        if out.len() == taps.len() {
            break;
        }
    }
    out
}

/// `E = α·½‖x − x_c‖² + β·Σ_taps Σ_i ‖Ψ_i − Ψ_NN(i)‖²` with the assignment frozen.
pub fn objective64(net: &FeatureExtractor, ctx: &LevelContext<'_>, image: &T64, nn: &[NNAssignment]) -> f64 {
    let taps = forward64(net, image);
    let get = |name: &str| &taps.iter().find(|(n, _)| n == name).unwrap().1;
    let target = ctx.content_target();
    let x = get(ctx.content_layer());
    let content: f64 = x
        .d
        .iter()
        .zip(target.data())
        .map(|(a, &b)| 0.5 * (a - b as f64).powi(2))
        .sum();
    let k = ctx.patch_size();
    let mut style = 0.0;
    for (i, name) in ctx.style_layer_names().iter().enumerate() {
        let x = get(name);
        let sem = ctx.semantic(i).map(T64::from_tensor);
        let channels = x.c + sem.as_ref().map_or(0, |s| s.c);
        let value = |c: usize, y: usize, xx: usize| -> f64 {
            if c < x.c {
                x.at(c, y, xx)
            } else {
                sem.as_ref().unwrap().at(c - x.c, y, xx)
            }
        };
        let grid = ctx.style_grid(i);
        let pw = x.w - k + 1;
        for (p, &j) in nn[i].indices.iter().enumerate() {
            let (py, px) = (p / pw, p % pw);
            let target = grid.patch(j);
            for c in 0..channels {
                for dy in 0..k {
                    for dx in 0..k {
                        let t = target[(c * k + dy) * k + dx] as f64;
                        style += (value(c, py + dy, px + dx) - t).powi(2);
                    }
                }
            }
        }
    }
    ctx.alpha() * content + ctx.beta() * style
}

/// Best style patch per current patch by exhaustive search over cosine
/// similarity, lowest index on ties.
pub fn brute_force_nn(current: &[Vec<f32>], style: &[Vec<f32>]) -> Vec<usize> {
    let norm = |v: &[f32]| v.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt().max(1e-12);
    current
        .iter()
        .map(|a| {
            let na = norm(a);
            let mut best = (f64::NEG_INFINITY, 0);
            for (j, b) in style.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(&p, &q)| p as f64 * q as f64).sum();
                let s = dot / (na * norm(b));
                if s > best.0 {
                    best = (s, j);
                }
            }
            best.1
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}
