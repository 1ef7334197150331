//! PNG ingestion and export.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use doodle_core::{SemanticMap, Tensor};
use image::{DynamicImage, ImageFormat, RgbImage};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot decode {what}: {source}")]
    Decode {
        what: String,
        source: image::ImageError,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: image::ImageError,
    },
}

fn decode(bytes: &[u8], what: &str) -> Result<DynamicImage, IoError> {
    image::load_from_memory(bytes).map_err(|source| IoError::Decode {
        what: what.to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn planar(raw: &[u8], channels: usize, height: usize, width: usize) -> Tensor {
    Tensor::from_fn(channels, height, width, |c, y, x| {
        raw[(y * width + x) * channels + c] as f32
    })
}

/// Decodes an image as `3 × H × W` in `[0, 255]`. Alpha is dropped and grey is
/// replicated.
pub fn decode_image(bytes: &[u8], what: &str) -> Result<Tensor, IoError> {
    let img = decode(bytes, what)?.into_rgb8();
    let (w, h) = img.dimensions();
    Ok(planar(img.as_raw(), 3, h as usize, w as usize))
}

/// Decodes a semantic map. Greyscale gives `M = 1`, RGB `M = 3` and RGBA
/// `M = 4`, with alpha kept as the last channel.
pub fn decode_map(bytes: &[u8], what: &str) -> Result<SemanticMap, IoError> {
    let img = decode(bytes, what)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let color = img.color();
    let t = match (color.has_color(), color.has_alpha()) {
        (false, false) => planar(img.into_luma8().as_raw(), 1, h, w),
        (false, true) => {
            let la = img.into_luma_alpha8();
            planar(la.as_raw(), 2, h, w)
        }
        (true, false) => planar(img.into_rgb8().as_raw(), 3, h, w),
        (true, true) => planar(img.into_rgba8().as_raw(), 4, h, w),
    };
    Ok(SemanticMap::new(t))
}

pub fn load_image(path: &Path) -> Result<Tensor, IoError> {
    decode_image(&read(path)?, &path.display().to_string())
}

pub fn load_map(path: &Path) -> Result<SemanticMap, IoError> {
    decode_map(&read(path)?, &path.display().to_string())
}

/// Rounds and clamps a `3 × H × W` tensor to 8-bit RGB.
pub fn to_rgb8(t: &Tensor) -> RgbImage {
    let (c, h, w) = t.shape();
    assert_eq!(c, 3, "expected an RGB tensor");
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch| t.at(ch, y as usize, x as usize).round().clamp(0.0, 255.0) as u8;
        image::Rgb([px(0), px(1), px(2)])
    })
}

pub fn encode_png(t: &Tensor) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    to_rgb8(t)
        .write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding into memory");
    out.into_inner()
}

pub fn save_png(t: &Tensor, path: &Path) -> Result<(), IoError> {
    to_rgb8(t)
        .save_with_format(path, ImageFormat::Png)
        .map_err(|source| IoError::Write {
            path: path.to_path_buf(),
            source,
        })
}
