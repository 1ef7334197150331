//! The synthesis objective `E = α·E_c + β·Σ_layers E_s` at one resolution level.

use crate::error::{Error, Result};
use crate::extractor::{FeatureExtractor, TapSet};
use crate::patch::{extract_patches, nearest_neighbors, patches_of, style_loss_and_grad, NNAssignment, PatchGrid};
use crate::semantic::{concat_semantic, downsample_map, AugmentedFeatures, SemanticMap};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub content: f64,
    /// Style loss per style tap, in tap order.
    pub style: Vec<f64>,
    pub iteration: usize,
    pub level: usize,
}

impl LossReport {
    pub fn style_sum(&self) -> f64 {
        self.style.iter().sum()
    }
}

/// `E_c = ½ Σ (x − x_content)²` at `layer`, with gradient `x − x_content`.
pub fn content_loss_and_grad(x: &TapSet, x_content: &TapSet, layer: &str) -> Result<(f64, Tensor)> {
    let cur = x
        .get(layer)
        .ok_or_else(|| Error::Config(format!("content layer {layer:?} is not a tap")))?;
    let target = x_content
        .get(layer)
        .ok_or_else(|| Error::Config(format!("content layer {layer:?} missing from content taps")))?;
    let diff = cur.sub(target)?;
    let loss = 0.5 * diff.data().iter().map(|&d| (d as f64).powi(2)).sum::<f64>();
    Ok((loss, diff))
}

/// Per-tap data fixed for a whole level.
#[derive(Debug, Clone)]
struct StyleTap {
    name: String,
    /// γ·m at this tap's resolution for the image being optimized.
    semantic: Option<Tensor>,
    style_grid: PatchGrid,
}

/// Everything needed to evaluate the objective at one resolution level.
#[derive(Debug, Clone)]
pub struct LevelContext<'n> {
    net: &'n FeatureExtractor,
    alpha: f64,
    beta: f64,
    gamma: f32,
    k: usize,
    content_layer: String,
    content_taps: TapSet,
    style_taps: Vec<StyleTap>,
    height: usize,
    width: usize,
}

/// One objective evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: LossReport,
    pub grad: Tensor,
    /// Assignments used, one per style tap.
    pub assignments: Vec<NNAssignment>,
    /// Augmented features of the evaluated image, one per style tap.
    pub features: Vec<AugmentedFeatures>,
}

/// Inputs of one level. Maps are either both present or both absent.
pub struct LevelInputs<'a> {
    pub content: &'a Tensor,
    pub style: &'a Tensor,
    pub content_map: Option<&'a SemanticMap>,
    pub style_map: Option<&'a SemanticMap>,
}

impl<'n> LevelContext<'n> {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        net: &'n FeatureExtractor,
        inputs: &LevelInputs<'_>,
        style_layers: &[String],
        content_layer: &str,
        alpha: f64,
        beta: f64,
        gamma: f32,
        k: usize,
    ) -> Result<Self> {
        if net.tap_index(content_layer).is_none() {
            return Err(Error::Config(format!(
                "content layer {content_layer:?} is not one of the taps {:?}",
                net.tap_names()
            )));
        }
        let maps = match (inputs.content_map, inputs.style_map) {
            (Some(c), Some(s)) => {
                crate::semantic::check_map_pair(c, s)?;
                Some((c, s))
            }
            (None, None) => None,
            _ => {
                return Err(Error::Validation(
                    "content and style maps must be given together so both have the same M channels"
                        .into(),
                ))
            }
        };
        let (height, width) = (inputs.content.height(), inputs.content.width());
        let content_taps = net.extract(inputs.content)?;
        let style_act = net.extract(inputs.style)?;
        let mut style_taps = Vec::with_capacity(style_layers.len());
        for name in style_layers {
            let x_style = style_act
                .get(name)
                .ok_or_else(|| Error::Config(format!("style layer {name:?} is not a tap")))?;
            let (th, tw) = net.tap_size(name, height, width).expect("tap exists");
            let (style_aug, semantic) = match maps {
                Some((cm, sm)) => {
                    let sm_down = downsample_map(sm, x_style.height(), x_style.width())?;
                    let cm_down = downsample_map(cm, th, tw)?;
                    (
                        concat_semantic(x_style, &sm_down, gamma)?,
                        Some(cm_down.scaled(gamma)),
                    )
                }
                None => (AugmentedFeatures::plain(x_style.clone()), None),
            };
            if th < k || tw < k || style_aug.height() < k || style_aug.width() < k {
                return Err(Error::Size(format!(
                    "tap {name:?} is too small for {k}x{k} patches at this level"
                )));
            }
            style_taps.push(StyleTap {
                name: name.clone(),
                semantic,
                style_grid: extract_patches(&style_aug, k)?,
            });
        }
        Ok(LevelContext {
            net,
            alpha,
            beta,
            gamma,
            k,
            content_layer: content_layer.to_string(),
            content_taps,
            style_taps,
            height,
            width,
        })
    }

    pub fn gamma(&self) -> f32 {
        self.gamma
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn patch_size(&self) -> usize {
        self.k
    }

    pub fn content_layer(&self) -> &str {
        &self.content_layer
    }

    /// Activations of the content image at the content layer.
    pub fn content_target(&self) -> &Tensor {
        self.content_taps.get(&self.content_layer).expect("content layer extracted")
    }

    /// Style patches of the `i`-th style tap.
    pub fn style_grid(&self, i: usize) -> &PatchGrid {
        &self.style_taps[i].style_grid
    }

    /// Static `γ·m` block appended to the `i`-th tap of the optimized image.
    pub fn semantic(&self, i: usize) -> Option<&Tensor> {
        self.style_taps[i].semantic.as_ref()
    }

    pub fn style_layer_names(&self) -> Vec<&str> {
        self.style_taps.iter().map(|t| t.name.as_str()).collect()
    }

    fn augment(&self, tap: &StyleTap, x: &Tensor) -> Result<AugmentedFeatures> {
        match &tap.semantic {
            Some(sem) => AugmentedFeatures::with_scaled_semantic(x, sem, self.gamma),
            None => Ok(AugmentedFeatures::plain(x.clone())),
        }
    }

    /// Evaluates the objective at `image`. With `frozen = None` fresh nearest
    /// neighbours are computed; otherwise the given assignments are reused.
    pub fn evaluate(&self, image: &Tensor, frozen: Option<&[NNAssignment]>) -> Result<Evaluation> {
        if image.shape() != (3, self.height, self.width) {
            return Err(Error::Shape(format!(
                "image shape {:?} does not match level {}x{}",
                image.shape(),
                self.height,
                self.width
            )));
        }
        if let Some(nn) = frozen {
            if nn.len() != self.style_taps.len() {
                return Err(Error::Shape(format!(
                    "{} assignments for {} style taps",
                    nn.len(),
                    self.style_taps.len()
                )));
            }
        }
        let trace = self.net.forward(image)?;
        let taps = trace.taps();
        let mut grads = TapSet::new();

        let (content, cgrad) = content_loss_and_grad(taps, &self.content_taps, &self.content_layer)?;
        if self.alpha != 0.0 {
            grads.insert(self.content_layer.clone(), cgrad.scaled(self.alpha as f32));
        }

        let mut style = Vec::with_capacity(self.style_taps.len());
        let mut assignments = Vec::with_capacity(self.style_taps.len());
        let mut features = Vec::with_capacity(self.style_taps.len());
        for (i, tap) in self.style_taps.iter().enumerate() {
            let x = taps.get(&tap.name).expect("style tap is extracted");
            let aug = self.augment(tap, x)?;
            let nn = match frozen {
                Some(nn) => nn[i].clone(),
                None => nearest_neighbors(&patches_of(aug.tensor(), self.k)?, &tap.style_grid)?,
            };
            let (es, sgrad) = style_loss_and_grad(&aug, &tap.style_grid, &nn, self.k)?;
            if self.beta != 0.0 {
                let scaled = sgrad.scaled(self.beta as f32);
                match grads.get(&tap.name) {
                    Some(existing) => {
                        let mut sum = existing.clone();
                        sum.add_scaled(&scaled, 1.0)?;
                        grads.insert(tap.name.clone(), sum);
                    }
                    None => grads.insert(tap.name.clone(), scaled),
                }
            }
            style.push(es);
            assignments.push(nn);
            features.push(aug);
        }
        let grad = self.net.backprop(&trace, &grads)?;
        let total = self.alpha * content + self.beta * style.iter().sum::<f64>();
        Ok(Evaluation {
            report: LossReport {
                total,
                content,
                style,
                iteration: 0,
                level: 0,
            },
            grad,
            assignments,
            features,
        })
    }
}

/// Total objective and image gradient with freshly computed assignments.
pub fn total_loss_and_grad(image: &Tensor, context: &LevelContext<'_>) -> Result<(LossReport, Tensor)> {
    let e = context.evaluate(image, None)?;
    Ok((e.report, e.grad))
}
