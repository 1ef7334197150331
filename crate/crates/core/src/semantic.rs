//! Semantic annotation maps and their concatenation onto activations.
//!
//! An augmented feature tensor holds the `N` activation channels of a tap
//! followed by `M` channels of the annotation map, box-downsampled to the
//! tap's resolution and multiplied by the semantic weight γ.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest relative aspect-ratio difference tolerated between a map and its image.
pub const ASPECT_TOLERANCE: f64 = 0.02;

/// An `M`-channel annotation raster. RGB maps keep raw `[0, 255]` values.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    data: Tensor,
}

impl SemanticMap {
    pub fn new(data: Tensor) -> Self {
        SemanticMap { data }
    }

    pub fn channels(&self) -> usize {
        self.data.channels()
    }

    pub fn height(&self) -> usize {
        self.data.height()
    }

    pub fn width(&self) -> usize {
        self.data.width()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    /// Fails unless the map's aspect ratio is within 2% of an `height × width` image.
    pub fn check_aspect(&self, height: usize, width: usize) -> Result<()> {
        let image = height as f64 / width as f64;
        let map = self.height() as f64 / self.width() as f64;
        let diff = (map - image).abs() / image;
        if diff > ASPECT_TOLERANCE {
            return Err(Error::Validation(format!(
                "semantic map {}x{} does not share the aspect ratio of its {height}x{width} image ({:.1}% off)",
                self.height(),
                self.width(),
                diff * 100.0
            )));
        }
        Ok(())
    }
}

/// Content and style maps must use the same representation, hence the same `M`.
pub fn check_map_pair(content: &SemanticMap, style: &SemanticMap) -> Result<()> {
    if content.channels() != style.channels() {
        return Err(Error::Validation(format!(
            "content map has M={} channels but style map has M={}; both maps must use the same channels",
            content.channels(),
            style.channels()
        )));
    }
    Ok(())
}

/// Activation channels followed by γ-weighted semantic channels.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedFeatures {
    tensor: Tensor,
    n_activation: usize,
    n_semantic: usize,
    gamma: f32,
}

impl AugmentedFeatures {
    /// Activations with no semantic channels (`M = 0`).
    pub fn plain(x: Tensor) -> Self {
        AugmentedFeatures {
            n_activation: x.channels(),
            n_semantic: 0,
            gamma: 0.0,
            tensor: x,
        }
    }

    /// Appends a semantic block that is already multiplied by `gamma`.
    pub fn with_scaled_semantic(x: &Tensor, scaled: &Tensor, gamma: f32) -> Result<Self> {
        Ok(AugmentedFeatures {
            tensor: x.concat_channels(scaled)?,
            n_activation: x.channels(),
            n_semantic: scaled.channels(),
            gamma,
        })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn n_activation(&self) -> usize {
        self.n_activation
    }

    pub fn n_semantic(&self) -> usize {
        self.n_semantic
    }

    pub fn gamma(&self) -> f32 {
        self.gamma
    }

    pub fn channels(&self) -> usize {
        self.tensor.channels()
    }

    pub fn height(&self) -> usize {
        self.tensor.height()
    }

    pub fn width(&self) -> usize {
        self.tensor.width()
    }

    /// The semantic block `γ·m`, if any.
    pub fn semantic(&self) -> Option<Tensor> {
        (self.n_semantic > 0).then(|| {
            self.tensor
                .channel_range(self.n_activation, self.n_semantic)
                .expect("in range")
        })
    }

    /// Replaces the activation channels, keeping the semantic block bitwise.
    pub fn with_activations(&self, x: &Tensor) -> Result<Self> {
        if x.shape() != (self.n_activation, self.height(), self.width()) {
            return Err(Error::Shape(format!(
                "activation shape {:?} does not match {:?}",
                x.shape(),
                (self.n_activation, self.height(), self.width())
            )));
        }
        let mut tensor = self.tensor.clone();
        tensor.data_mut()[..x.len()].copy_from_slice(x.data());
        Ok(AugmentedFeatures { tensor, ..*self })
    }
}

/// Box-filter downsampling of a map to `height × width`. Upsampling is refused.
pub fn downsample_map(map: &SemanticMap, height: usize, width: usize) -> Result<Tensor> {
    if height > map.height() || width > map.width() {
        return Err(Error::Size(format!(
            "semantic map {}x{} is smaller than the {height}x{width} feature grid; author a larger map",
            map.height(),
            map.width()
        )));
    }
    map.tensor().downsample_area(height, width)
}

pub fn concat_semantic(x: &Tensor, m_down: &Tensor, gamma: f32) -> Result<AugmentedFeatures> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Parameter(format!(
            "semantic weight must be finite and non-negative, got {gamma}"
        )));
    }
    if (x.height(), x.width()) != (m_down.height(), m_down.width()) {
        return Err(Error::Shape(format!(
            "activations are {}x{} but the downsampled map is {}x{}",
            x.height(),
            x.width(),
            m_down.height(),
            m_down.width()
        )));
    }
    let tensor = x.concat_channels(&m_down.scaled(gamma))?;
    Ok(AugmentedFeatures {
        tensor,
        n_activation: x.channels(),
        n_semantic: m_down.channels(),
        gamma,
    })
}

/// γ that equalizes mean absolute magnitudes: `mean|x| / mean|m|`.
pub fn auto_gamma(x: &Tensor, m_down: &Tensor) -> Result<f32> {
    let mm = m_down.mean_abs();
    if mm == 0.0 {
        return Err(Error::DegenerateMap(
            "semantic map is zero everywhere; cannot derive an automatic weight".into(),
        ));
    }
    let mx = x.mean_abs();
    if mx == 0.0 {
        return Err(Error::DegenerateMap(
            "activations are zero everywhere; cannot derive an automatic weight".into(),
        ));
    }
    Ok((mx / mm) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_map_stays_constant() {
        let map = SemanticMap::new(Tensor::filled(2, 12, 9, 128.0));
        for (h, w) in [(12, 9), (5, 4), (1, 1), (7, 3)] {
            let d = downsample_map(&map, h, w).unwrap();
            assert!(d.data().iter().all(|&v| v == 128.0), "{h}x{w}");
        }
    }

    #[test]
    fn half_split_map() {
        let map = SemanticMap::new(Tensor::from_fn(1, 4, 4, |_, _, x| {
            if x < 2 {
                0.0
            } else {
                255.0
            }
        }));
        let d = downsample_map(&map, 2, 2).unwrap();
        assert_eq!(d.data(), &[0.0, 255.0, 0.0, 255.0]);
    }

    #[test]
    fn block_mean_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let src = random_tensor(&mut rng, 3, 16, 16, 0.0, 255.0);
        let d = downsample_map(&SemanticMap::new(src.clone()), 4, 4).unwrap();
        for c in 0..3 {
            for by in 0..4 {
                for bx in 0..4 {
                    let mut s = 0.0f64;
                    for y in 0..4 {
                        for x in 0..4 {
                            s += src.at(c, by * 4 + y, bx * 4 + x) as f64;
                        }
                    }
                    let want = s / 16.0;
                    assert!((d.at(c, by, bx) as f64 - want).abs() <= 1e-5 * want.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn upsampling_refused() {
        let map = SemanticMap::new(Tensor::zeros(1, 4, 4));
        assert!(matches!(downsample_map(&map, 8, 4), Err(Error::Size(_))));
    }

    #[test]
    fn gamma_zero_and_fifty() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, 2, 3, 3, -1.0, 1.0);
        let m = Tensor::filled(1, 3, 3, 1.0);
        let zero = concat_semantic(&x, &m, 0.0).unwrap();
        assert_eq!(zero.channels(), 3);
        assert_eq!(zero.tensor().channel_range(0, 2).unwrap(), x);
        assert!(zero.semantic().unwrap().data().iter().all(|&v| v == 0.0));
        let fifty = concat_semantic(&x, &m, 50.0).unwrap();
        assert!(fifty.semantic().unwrap().data().iter().all(|&v| v == 50.0));
        assert_eq!((fifty.n_activation(), fifty.n_semantic()), (2, 1));
    }

    #[test]
    fn concat_errors() {
        let x = Tensor::zeros(2, 3, 3);
        assert!(matches!(
            concat_semantic(&x, &Tensor::zeros(1, 3, 4), 1.0),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            concat_semantic(&x, &Tensor::zeros(1, 3, 3), -1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn auto_gamma_ratio() {
        let x = Tensor::filled(4, 2, 2, -5.0);
        let m = Tensor::filled(1, 2, 2, 0.1);
        assert!((auto_gamma(&x, &m).unwrap() - 50.0).abs() < 1e-4);
        assert_eq!(auto_gamma(&m, &m).unwrap(), 1.0);
        assert!(matches!(
            auto_gamma(&x, &Tensor::zeros(1, 2, 2)),
            Err(Error::DegenerateMap(_))
        ));
    }

    #[test]
    fn aspect_rules() {
        let map = SemanticMap::new(Tensor::zeros(3, 16, 25));
        assert!(map.check_aspect(64, 100).is_ok());
        assert!(map.check_aspect(64, 101).is_ok());
        assert!(map.check_aspect(64, 64).is_err());
        let a = SemanticMap::new(Tensor::zeros(3, 4, 4));
        let b = SemanticMap::new(Tensor::zeros(1, 4, 4));
        assert!(matches!(check_map_pair(&a, &b), Err(Error::Validation(_))));
    }
}
