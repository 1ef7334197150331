//! Dense patch grids, nearest-neighbour matching by normalized
//! cross-correlation, and the patch style loss.
//!
//! A patch is the `k × k` window at `(py, px)` across all `C` channels,
//! flattened channel-major as `(c * k + dy) * k + dx`. Semantic channels
//! therefore sit at the tail of every patch vector.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::semantic::AugmentedFeatures;
use crate::tensor::Tensor;

/// Denominator floor for zero-norm patches.
pub const NORM_EPS: f64 = 1e-12;

/// Current patches handled per parallel task.
const ROW_BLOCK: usize = 32;
/// Style patches per cache block; sized so one block of vectors stays in L2.
const STYLE_BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    channels: usize,
    height: usize,
    width: usize,
    k: usize,
    data: Vec<f32>,
    norms: Vec<f64>,
}

impl PatchGrid {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Source tensor height and width.
    pub fn source_size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Patch positions along each axis.
    pub fn grid_size(&self) -> (usize, usize) {
        (self.height - self.k + 1, self.width - self.k + 1)
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.channels * self.k * self.k
    }

    pub fn patch(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    /// Top-left corner of patch `i`.
    pub fn position(&self, i: usize) -> (usize, usize) {
        let pw = self.width - self.k + 1;
        (i / pw, i % pw)
    }

    /// Multiplies every value of patch `i` by `s` and refreshes its norm.
    pub fn scale_patch(&mut self, i: usize, s: f32) {
        let d = self.dim();
        let p = &mut self.data[i * d..(i + 1) * d];
        p.iter_mut().for_each(|v| *v *= s);
        self.norms[i] = dot(p, p).sqrt();
    }
}

/// Best style patch per current patch, with the correlation it achieved.
#[derive(Debug, Clone, PartialEq)]
pub struct NNAssignment {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl NNAssignment {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Inner product with four interleaved `f64` lanes; element `i` always lands in
/// lane `i % 4`, so trailing zeros never change the result.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] as f64 * y[0] as f64;
        acc[1] += x[1] as f64 * y[1] as f64;
        acc[2] += x[2] as f64 * y[2] as f64;
        acc[3] += x[3] as f64 * y[3] as f64;
    }
    for (lane, (x, y)) in ra.iter().zip(rb).enumerate() {
        acc[lane] += *x as f64 * *y as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

pub fn extract_patches(s: &AugmentedFeatures, k: usize) -> Result<PatchGrid> {
    patches_of(s.tensor(), k)
}

/// Dense stride-1 patches of any tensor, row-major by top-left corner.
pub fn patches_of(t: &Tensor, k: usize) -> Result<PatchGrid> {
    let (c, h, w) = t.shape();
    if k == 0 || k % 2 == 0 {
        return Err(Error::Parameter(format!("patch size must be odd, got {k}")));
    }
    if k > h || k > w {
        return Err(Error::Shape(format!(
            "patch size {k} exceeds the {h}x{w} feature grid"
        )));
    }
    let (ph, pw) = (h - k + 1, w - k + 1);
    let dim = c * k * k;
    let mut data = vec![0f32; ph * pw * dim];
    data.par_chunks_mut(pw * dim)
        .enumerate()
        .for_each(|(py, row)| {
            for px in 0..pw {
                let dst = &mut row[px * dim..(px + 1) * dim];
                let mut n = 0;
                for ch in 0..c {
                    let plane = t.plane(ch);
                    for dy in 0..k {
                        let src = &plane[(py + dy) * w + px..(py + dy) * w + px + k];
                        dst[n..n + k].copy_from_slice(src);
                        n += k;
                    }
                }
            }
        });
    let norms = data.par_chunks(dim).map(|p| dot(p, p).sqrt()).collect();
    Ok(PatchGrid {
        channels: c,
        height: h,
        width: w,
        k,
        data,
        norms,
    })
}

/// Normalized cross-correlation of two patches given their norms.
#[inline]
fn correlation(a: &[f32], b: &[f32], na: f64, nb: f64) -> f64 {
    dot(a, b) / (na.max(NORM_EPS) * nb.max(NORM_EPS))
}

/// For every current patch, the style patch with the highest normalized
/// cross-correlation; ties go to the lowest style index.
pub fn nearest_neighbors(current: &PatchGrid, style: &PatchGrid) -> Result<NNAssignment> {
    if current.channels != style.channels || current.k != style.k {
        return Err(Error::Shape(format!(
            "cannot match {}-channel k={} patches against {}-channel k={} patches",
            current.channels, current.k, style.channels, style.k
        )));
    }
    if style.is_empty() {
        return Err(Error::Shape("style patch grid is empty".into()));
    }
    let n = current.len();
    let mut indices = vec![0usize; n];
    let mut scores = vec![f64::NEG_INFINITY; n];
    indices
        .par_chunks_mut(ROW_BLOCK)
        .zip(scores.par_chunks_mut(ROW_BLOCK))
        .enumerate()
        .for_each(|(blk, (idx, best))| {
            let base = blk * ROW_BLOCK;
            for j0 in (0..style.len()).step_by(STYLE_BLOCK) {
                let j1 = (j0 + STYLE_BLOCK).min(style.len());
                for (r, (bi, bs)) in idx.iter_mut().zip(best.iter_mut()).enumerate() {
                    let i = base + r;
                    let a = current.patch(i);
                    let na = current.norms[i];
                    for j in j0..j1 {
                        let s = correlation(a, style.patch(j), na, style.norms[j]);
                        if s > *bs {
                            *bs = s;
                            *bi = j;
                        }
                    }
                }
            }
        });
    Ok(NNAssignment { indices, scores })
}

/// Patch style loss `Σ_i ‖Ψ_i(current) − Ψ_NN(i)(style)‖²` over all channels, and
/// its gradient with respect to the activation channels only. Semantic channels
/// add to the loss but receive no gradient.
pub fn style_loss_and_grad(
    current: &AugmentedFeatures,
    style_grid: &PatchGrid,
    nn: &NNAssignment,
    k: usize,
) -> Result<(f64, Tensor)> {
    let t = current.tensor();
    let (c, h, w) = t.shape();
    if style_grid.channels != c || style_grid.k != k {
        return Err(Error::Shape(format!(
            "style grid has {} channels and k={}, current features have {c} channels and k={k}",
            style_grid.channels, style_grid.k
        )));
    }
    if k > h || k > w {
        return Err(Error::Shape(format!("patch size {k} exceeds {h}x{w}")));
    }
    let (ph, pw) = (h - k + 1, w - k + 1);
    if nn.len() != ph * pw {
        return Err(Error::Shape(format!(
            "assignment has {} entries for {} current patches",
            nn.len(),
            ph * pw
        )));
    }
    if let Some(&bad) = nn.indices.iter().find(|&&j| j >= style_grid.len()) {
        return Err(Error::Shape(format!(
            "assignment refers to style patch {bad} of {}",
            style_grid.len()
        )));
    }

    let per_patch: Vec<f64> = (0..ph * pw)
        .into_par_iter()
        .map(|i| {
            let (py, px) = (i / pw, i % pw);
            let target = style_grid.patch(nn.indices[i]);
            let mut acc = [0f64; 4];
            let mut n = 0;
            for ch in 0..c {
                let plane = t.plane(ch);
                for dy in 0..k {
                    let row = &plane[(py + dy) * w + px..(py + dy) * w + px + k];
                    for &v in row {
                        let d = v as f64 - target[n] as f64;
                        acc[n % 4] += d * d;
                        n += 1;
                    }
                }
            }
            (acc[0] + acc[1]) + (acc[2] + acc[3])
        })
        .collect();
    let loss: f64 = per_patch.iter().sum();

    let n_act = current.n_activation();
    let mut grad = Tensor::zeros(n_act, h, w);
    grad.data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(ch, dst)| {
            let plane = t.plane(ch);
            for y in 0..h {
                for x in 0..w {
                    let v = plane[y * w + x];
                    let mut g = 0f32;
                    for dy in 0..k {
                        if dy > y || y - dy >= ph {
                            continue;
                        }
                        let py = y - dy;
                        for dx in 0..k {
                            if dx > x || x - dx >= pw {
                                continue;
                            }
                            let px = x - dx;
                            let target = style_grid.patch(nn.indices[py * pw + px]);
                            g += 2.0 * (v - target[(ch * k + dy) * k + dx]);
                        }
                    }
                    dst[y * w + x] = g;
                }
            }
        });
    Ok((loss, grad))
}
