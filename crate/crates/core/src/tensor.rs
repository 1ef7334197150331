//! Dense channel-major 2-D tensors of `f32`.
//!
//! A [`Tensor`] stores `channels × height × width` values row-major within
//! each channel plane. It carries images (3 channels, values in `[0, 255]`),
//! activations, semantic maps and gradients alike.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        assert!(
            channels >= 1 && height >= 1 && width >= 1,
            "tensor dimensions must be positive, got {channels}x{height}x{width}"
        );
        Tensor {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Wraps `data` as a tensor, checking the length and that every value is finite.
    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "tensor dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {} at index {bad}",
                data[bad]
            )));
        }
        Ok(Tensor {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds a tensor by evaluating `f(c, y, x)` for every cell.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut t = Tensor::zeros(channels, height, width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    t.data[(c * height + y) * width + x] = f(c, y, x);
                }
            }
        }
        t
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn scaled(&self, s: f32) -> Tensor {
        self.map(|v| v * s)
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &Tensor, s: f32) -> Result<()> {
        self.expect_shape(other, "add_scaled")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.expect_shape(other, "sub")?;
        Ok(Tensor {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
            ..*self
        })
    }

    /// Inner product accumulated in `f64`.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.expect_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean_abs(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64).abs()).sum::<f64>() / self.data.len() as f64
    }

    pub fn channel_mean(&self, c: usize) -> f64 {
        let p = self.plane(c);
        p.iter().map(|&v| v as f64).sum::<f64>() / p.len() as f64
    }

    pub fn clamp(&self, lo: f32, hi: f32) -> Tensor {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Concatenates `other`'s channels after `self`'s. Spatial sizes must match.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Shape(format!(
                "cannot concatenate {}x{} with {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Tensor {
            channels: self.channels + other.channels,
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// Channels `[start, start + count)` as a new tensor.
    pub fn channel_range(&self, start: usize, count: usize) -> Result<Tensor> {
        if count == 0 || start + count > self.channels {
            return Err(Error::Shape(format!(
                "channel range {start}..{} outside 0..{}",
                start + count,
                self.channels
            )));
        }
        let n = self.height * self.width;
        Ok(Tensor {
            channels: count,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + count) * n].to_vec(),
        })
    }

    /// Bilinear resize with aligned corners: output corner cells equal input corner cells.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Tensor {
        let ys = bilinear_taps(self.height, height);
        let xs = bilinear_taps(self.width, width);
        let mut out = Tensor::zeros(self.channels, height, width);
        for c in 0..self.channels {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let a = src[y0 * self.width + x0] as f64;
                    let b = src[y0 * self.width + x1] as f64;
                    let cc = src[y1 * self.width + x0] as f64;
                    let d = src[y1 * self.width + x1] as f64;
                    let top = a + (b - a) * fx;
                    let bottom = cc + (d - cc) * fx;
                    dst[oy * width + ox] = (top + (bottom - top) * fy) as f32;
                }
            }
        }
        out
    }

    /// Box-filter downsampling: each target cell is the area-weighted mean of the
    /// source cells it covers. Integer factors reduce to plain block means.
    pub fn downsample_area(&self, height: usize, width: usize) -> Result<Tensor> {
        if height == 0 || width == 0 || height > self.height || width > self.width {
            return Err(Error::Size(format!(
                "cannot box-downsample {}x{} to {height}x{width}",
                self.height, self.width
            )));
        }
        let ys = area_weights(self.height, height);
        let xs = area_weights(self.width, width);
        let mut out = Tensor::zeros(self.channels, height, width);
        let mut row = vec![0f64; self.width];
        for c in 0..self.channels {
            let src = self.plane(c);
            for (oy, wy) in ys.iter().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                for &(sy, f) in wy {
                    for (r, &s) in row.iter_mut().zip(&src[sy * self.width..(sy + 1) * self.width]) {
                        *r += f * s as f64;
                    }
                }
                for (ox, wx) in xs.iter().enumerate() {
                    let v: f64 = wx.iter().map(|&(sx, f)| f * row[sx]).sum();
                    out.data[(c * height + oy) * width + ox] = v as f32;
                }
            }
        }
        Ok(out)
    }

    fn expect_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{op}: shape {:?} does not match {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }
}

// `..*self` above needs the struct update syntax to copy scalars only;
// Vec is not Copy, so the explicit fields are listed instead.
impl Tensor {
    #[allow(dead_code)]
    fn _unused(&self) {}
}

fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            if src == 1 || dst == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Per target cell, the source cells it overlaps and the normalized overlap weights.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let mut w = Vec::new();
            let mut s = lo.floor() as usize;
            while (s as f64) < hi && s < src {
                let overlap = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
                if overlap > 0.0 {
                    w.push((s, overlap / scale));
                }
                s += 1;
            }
            w
        })
        .collect()
}
