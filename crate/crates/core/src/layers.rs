//! Forward and backward passes for the three layer kinds of the feature
//! extractor: 3×3 same-padded convolution, rectification and 2×2 average
//! pooling.
//!
//! Weights are frozen, so backward passes only produce input gradients.
//! Every output cell is accumulated by exactly one task in a fixed order,
//! which keeps results bitwise independent of the rayon thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    out_channels: usize,
    in_channels: usize,
    /// `out × in × 3 × 3`, row-major
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvLayer {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::Shape("conv layer needs at least one channel".into()));
        }
        if weights.len() != out_channels * in_channels * 9 {
            return Err(Error::Shape(format!(
                "expected {} weights for {out_channels}x{in_channels}x3x3, got {}",
                out_channels * in_channels * 9,
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "expected {out_channels} biases, got {}",
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Validation("conv parameters must be finite".into()));
        }
        Ok(ConvLayer {
            out_channels,
            in_channels,
            weights,
            bias,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    #[inline]
    fn kernel(&self, o: usize, c: usize) -> &[f32] {
        let at = (o * self.in_channels + c) * 9;
        &self.weights[at..at + 9]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Relu,
    Pool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv { name: String, conv: ConvLayer },
    Relu { name: String },
    Pool { name: String },
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv { .. } => LayerKind::Conv,
            LayerSpec::Relu { .. } => LayerKind::Relu,
            LayerSpec::Pool { .. } => LayerKind::Pool,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Conv { name, .. } | LayerSpec::Relu { name } | LayerSpec::Pool { name } => {
                name
            }
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            LayerSpec::Conv { conv, .. } => conv3x3_forward(input, conv),
            LayerSpec::Relu { .. } => Ok(relu_forward(input)),
            LayerSpec::Pool { .. } => Ok(avgpool2x2_forward(input)),
        }
    }

    /// Gradient with respect to `input`, given the gradient at this layer's output.
    pub fn backward(&self, grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
        match self {
            LayerSpec::Conv { conv, .. } => conv3x3_backward(grad_out, input, conv),
            LayerSpec::Relu { .. } => relu_backward(grad_out, input),
            LayerSpec::Pool { .. } => avgpool2x2_backward(grad_out, input.shape()),
        }
    }
}

/// Row and column ranges of output cells whose source cell `(y + dy, x + dx)` is in bounds.
#[inline]
fn valid_range(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).min(len as isize).max(0) as usize;
    (lo, hi.max(lo))
}

pub fn conv3x3_forward(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    if input.channels() != layer.in_channels {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {}",
            layer.in_channels,
            input.channels()
        )));
    }
    let (_, h, w) = input.shape();
    let mut out = Tensor::zeros(layer.out_channels, h, w);
    out.data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(o, dst)| {
            dst.fill(layer.bias[o]);
            for c in 0..layer.in_channels {
                let src = input.plane(c);
                let kernel = layer.kernel(o, c);
                for (tap, &wgt) in kernel.iter().enumerate() {
                    let dy = (tap / 3) as isize - 1;
                    let dx = (tap % 3) as isize - 1;
                    let (y0, y1) = valid_range(h, dy);
                    let (x0, x1) = valid_range(w, dx);
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let srow = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                        let drow = &mut dst[y * w + x0..y * w + x1];
                        for (d, &s) in drow.iter_mut().zip(srow) {
                            *d += wgt * s;
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Adjoint of [`conv3x3_forward`] with respect to its input.
pub fn conv3x3_backward(grad_out: &Tensor, input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    let (c_in, h, w) = input.shape();
    if c_in != layer.in_channels {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {c_in}",
            layer.in_channels
        )));
    }
    if grad_out.shape() != (layer.out_channels, h, w) {
        return Err(Error::Shape(format!(
            "conv gradient shape {:?} does not match output {:?}",
            grad_out.shape(),
            (layer.out_channels, h, w)
        )));
    }
    let mut grad_in = Tensor::zeros(c_in, h, w);
    grad_in
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(c, dst)| {
            for o in 0..layer.out_channels {
                let g = grad_out.plane(o);
                let kernel = layer.kernel(o, c);
                for (tap, &wgt) in kernel.iter().enumerate() {
                    let dy = (tap / 3) as isize - 1;
                    let dx = (tap % 3) as isize - 1;
                    // output cell (y, x) read input cell (y + dy, x + dx)
                    let (y0, y1) = valid_range(h, dy);
                    let (x0, x1) = valid_range(w, dx);
                    for y in y0..y1 {
                        let iy = (y as isize + dy) as usize;
                        let ix0 = (x0 as isize + dx) as usize;
                        let grow = &g[y * w + x0..y * w + x1];
                        let drow = &mut dst[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                        for (d, &gv) in drow.iter_mut().zip(grow) {
                            *d += wgt * gv;
                        }
                    }
                }
            }
        });
    Ok(grad_in)
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    if !grad_out.same_shape(input) {
        return Err(Error::Shape(format!(
            "relu gradient shape {:?} does not match input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(input.channels(), input.height(), input.width(), data)
}

/// Output size of 2×2 pooling along one axis; odd sizes are zero-padded to even.
pub fn pooled_len(len: usize) -> usize {
    len.div_ceil(2)
}

pub fn avgpool2x2_forward(input: &Tensor) -> Tensor {
    let (c, h, w) = input.shape();
    let (ph, pw) = (pooled_len(h), pooled_len(w));
    let mut out = Tensor::zeros(c, ph, pw);
    out.data_mut()
        .par_chunks_mut(ph * pw)
        .enumerate()
        .for_each(|(ch, dst)| {
            let src = input.plane(ch);
            for oy in 0..ph {
                for ox in 0..pw {
                    let mut s = 0.0f32;
                    for y in 2 * oy..(2 * oy + 2).min(h) {
                        for x in 2 * ox..(2 * ox + 2).min(w) {
                            s += src[y * w + x];
                        }
                    }
                    dst[oy * pw + ox] = s * 0.25;
                }
            }
        });
    out
}

pub fn avgpool2x2_backward(
    grad_out: &Tensor,
    input_shape: (usize, usize, usize),
) -> Result<Tensor> {
    let (c, h, w) = input_shape;
    let (ph, pw) = (pooled_len(h), pooled_len(w));
    if grad_out.shape() != (c, ph, pw) {
        return Err(Error::Shape(format!(
            "pool gradient shape {:?} does not match pooled {:?}",
            grad_out.shape(),
            (c, ph, pw)
        )));
    }
    Ok(Tensor::from_fn(c, h, w, |ch, y, x| {
        grad_out.at(ch, y / 2, x / 2) * 0.25
    }))
}
