//! Layered feature network with frozen weights, named taps and a binary
//! weight-file format.
//!
//! Weight file layout (all integers little-endian):
//!
//! ```text
//! "DFW1" | u32 layer count
//!        | per layer: u8 kind (0 = conv, 1 = relu, 2 = pool)
//!        |            conv only: u32 out_ch, u32 in_ch,
//!        |                       out*in*9 f32 weights, out f32 biases
//!        | u32 tap count | per tap: u32 layer index
//! ```

use crate::error::{Error, Result};
use crate::layers::{pooled_len, ConvLayer, LayerKind, LayerSpec};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"DFW1";

/// Smallest image side accepted by [`FeatureExtractor::extract`].
pub const MIN_IMAGE_SIDE: usize = 16;

static DEFAULT_WEIGHTS: &[u8] = include_bytes!("../assets/default.dfw");

/// Activations keyed by tap name, ordered by network depth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TapSet {
    entries: Vec<(String, Tensor)>,
}

impl TapSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces the tensor stored under `name`.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = t,
            None => self.entries.push((name, t)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    layers: Vec<LayerSpec>,
    /// Indices into `layers`, strictly increasing; the tap is the layer's output.
    taps: Vec<usize>,
}

/// Intermediate state of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `inputs[i]` is the input of layer `i`; the last entry is the deepest tap's output.
    inputs: Vec<Tensor>,
    taps: TapSet,
}

impl ForwardTrace {
    pub fn taps(&self) -> &TapSet {
        &self.taps
    }

    pub fn image(&self) -> &Tensor {
        &self.inputs[0]
    }
}

impl FeatureExtractor {
    /// Builds an extractor from kind/weight specs, naming layers VGG-style
    /// (`conv1_1`, `relu1_1`, `pool1`, `conv2_1`, ...).
    pub fn new(layers: Vec<(LayerKind, Option<ConvLayer>)>, taps: Vec<usize>) -> Result<Self> {
        let mut block = 1;
        let mut index = 0;
        let mut specs = Vec::with_capacity(layers.len());
        for (pos, (kind, conv)) in layers.into_iter().enumerate() {
            let spec = match (kind, conv) {
                (LayerKind::Conv, Some(conv)) => {
                    index += 1;
                    LayerSpec::Conv {
                        name: format!("conv{block}_{index}"),
                        conv,
                    }
                }
                (LayerKind::Relu, None) => LayerSpec::Relu {
                    name: format!("relu{block}_{}", index.max(1)),
                },
                (LayerKind::Pool, None) => {
                    let s = LayerSpec::Pool {
                        name: format!("pool{block}"),
                    };
                    block += 1;
                    index = 0;
                    s
                }
                (kind, _) => {
                    return Err(Error::Validation(format!(
                        "layer {pos}: {kind:?} layer with mismatched parameters"
                    )))
                }
            };
            specs.push(spec);
        }
        let net = FeatureExtractor {
            layers: specs,
            taps,
        };
        net.validate()?;
        Ok(net)
    }

    /// The desk-scale network shipped with the crate:
    /// conv(3→16) relu conv(16→16) relu pool conv(16→32) relu pool conv(32→32) relu,
    /// tapped after `relu2_1` (½ resolution) and `relu3_1` (¼ resolution).
    pub fn default_net() -> Self {
        Self::load_weights(DEFAULT_WEIGHTS).expect("embedded weight fixture is valid")
    }

    pub fn default_weight_bytes() -> &'static [u8] {
        DEFAULT_WEIGHTS
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Validation("network has no layers".into()));
        }
        let mut channels = 3;
        let mut seen_conv = false;
        for (i, layer) in self.layers.iter().enumerate() {
            if let LayerSpec::Conv { conv, name } = layer {
                if conv.in_channels() != channels {
                    return Err(Error::Validation(format!(
                        "layer {i} ({name}) expects {} input channels but receives {channels}{}",
                        conv.in_channels(),
                        if seen_conv { "" } else { " (first conv must accept RGB)" }
                    )));
                }
                channels = conv.out_channels();
                seen_conv = true;
            }
        }
        if !seen_conv {
            return Err(Error::Validation("network has no convolution".into()));
        }
        if self.taps.is_empty() {
            return Err(Error::Validation("network exposes no taps".into()));
        }
        for pair in self.taps.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Validation(
                    "tap indices must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&bad) = self.taps.iter().find(|&&t| t >= self.layers.len()) {
            return Err(Error::Validation(format!(
                "tap refers to layer {bad}, network has {}",
                self.layers.len()
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn tap_names(&self) -> Vec<String> {
        self.taps
            .iter()
            .map(|&i| self.layers[i].name().to_string())
            .collect()
    }

    pub fn tap_index(&self, name: &str) -> Option<usize> {
        self.taps
            .iter()
            .copied()
            .find(|&i| self.layers[i].name() == name)
    }

    /// Channel count at the named tap.
    pub fn tap_channels(&self, name: &str) -> Option<usize> {
        let idx = self.tap_index(name)?;
        let mut channels = 3;
        for layer in &self.layers[..=idx] {
            if let LayerSpec::Conv { conv, .. } = layer {
                channels = conv.out_channels();
            }
        }
        Some(channels)
    }

    /// Number of pooling layers before the named tap.
    pub fn tap_pool_depth(&self, name: &str) -> Option<usize> {
        let idx = self.tap_index(name)?;
        Some(
            self.layers[..=idx]
                .iter()
                .filter(|l| l.kind() == LayerKind::Pool)
                .count(),
        )
    }

    /// Spatial size of the named tap for an `height × width` input.
    pub fn tap_size(&self, name: &str, height: usize, width: usize) -> Option<(usize, usize)> {
        let depth = self.tap_pool_depth(name)?;
        let (mut h, mut w) = (height, width);
        for _ in 0..depth {
            h = pooled_len(h);
            w = pooled_len(w);
        }
        Some((h, w))
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        if image.channels() != 3 {
            return Err(Error::Shape(format!(
                "extractor expects an RGB image, got {} channels",
                image.channels()
            )));
        }
        if image.height() < MIN_IMAGE_SIDE || image.width() < MIN_IMAGE_SIDE {
            return Err(Error::Size(format!(
                "image {}x{} is smaller than the {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE} minimum",
                image.height(),
                image.width()
            )));
        }
        Ok(())
    }

    /// Runs the network up to its deepest tap, keeping every layer input.
    pub fn forward(&self, image: &Tensor) -> Result<ForwardTrace> {
        self.check_image(image)?;
        let last = *self.taps.last().expect("validated");
        let mut inputs = Vec::with_capacity(last + 2);
        inputs.push(image.clone());
        let mut taps = TapSet::new();
        for (i, layer) in self.layers[..=last].iter().enumerate() {
            let out = layer.forward(inputs.last().expect("non-empty"))?;
            if self.taps.contains(&i) {
                taps.insert(layer.name(), out.clone());
            }
            inputs.push(out);
        }
        Ok(ForwardTrace { inputs, taps })
    }

    pub fn extract(&self, image: &Tensor) -> Result<TapSet> {
        Ok(self.forward(image)?.taps)
    }

    /// Gradient of `Σ_taps <tap_grad, activation>` with respect to the traced image.
    /// Taps missing from `tap_grads` contribute nothing.
    pub fn backprop(&self, trace: &ForwardTrace, tap_grads: &TapSet) -> Result<Tensor> {
        for name in tap_grads.names() {
            let idx = self.tap_index(name).ok_or_else(|| {
                Error::Shape(format!("gradient supplied for unknown tap {name:?}"))
            })?;
            let expected = trace.inputs[idx + 1].shape();
            let got = tap_grads.get(name).expect("listed").shape();
            if got != expected {
                return Err(Error::Shape(format!(
                    "gradient for tap {name:?} has shape {got:?}, activation is {expected:?}"
                )));
            }
        }
        let last = *self.taps.last().expect("validated");
        let mut grad: Option<Tensor> = None;
        for i in (0..=last).rev() {
            let layer = &self.layers[i];
            if let Some(g) = tap_grads.get(layer.name()).filter(|_| self.taps.contains(&i)) {
                match grad.as_mut() {
                    Some(acc) => acc.add_scaled(g, 1.0)?,
                    None => grad = Some(g.clone()),
                }
            }
            if let Some(g) = grad.take() {
                grad = Some(layer.backward(&g, &trace.inputs[i])?);
            }
        }
        let image = trace.image();
        Ok(grad.unwrap_or_else(|| Tensor::zeros(3, image.height(), image.width())))
    }

    pub fn backprop_to_image(&self, tap_grads: &TapSet, image: &Tensor) -> Result<Tensor> {
        let trace = self.forward(image)?;
        self.backprop(&trace, tap_grads)
    }

    pub fn load_weights(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(Error::Format("missing DFW1 magic".into()));
        }
        let count = r
            .u32()
            .map_err(|_| Error::Truncated {
                layer: 0,
                detail: "header ends before layer count".into(),
            })? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let trunc = |what: &str| Error::Truncated {
                layer: i,
                detail: format!("payload ends inside {what}"),
            };
            let kind = r.u8().map_err(|_| trunc("layer kind"))?;
            match kind {
                0 => {
                    let out = r.u32().map_err(|_| trunc("out_channels"))? as usize;
                    let inp = r.u32().map_err(|_| trunc("in_channels"))? as usize;
                    let n = out
                        .checked_mul(inp)
                        .and_then(|v| v.checked_mul(9))
                        .ok_or_else(|| Error::Format(format!("layer {i}: absurd shape")))?;
                    let weights = r.f32s(n).map_err(|_| {
                        Error::Truncated {
                            layer: i,
                            detail: format!("declared {out}x{inp}x3x3 weights exceed payload"),
                        }
                    })?;
                    let bias = r.f32s(out).map_err(|_| trunc("biases"))?;
                    let conv = ConvLayer::new(out, inp, weights, bias)
                        .map_err(|e| Error::Validation(format!("layer {i}: {e}")))?;
                    layers.push((LayerKind::Conv, Some(conv)));
                }
                1 => layers.push((LayerKind::Relu, None)),
                2 => layers.push((LayerKind::Pool, None)),
                k => return Err(Error::Format(format!("layer {i}: unknown kind byte {k}"))),
            }
        }
        let tap_trunc = |_| Error::Truncated {
            layer: count,
            detail: "payload ends inside tap table".into(),
        };
        let tap_count = r.u32().map_err(tap_trunc)? as usize;
        let mut taps = Vec::with_capacity(tap_count.min(1024));
        for _ in 0..tap_count {
            taps.push(r.u32().map_err(tap_trunc)? as usize);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after tap table",
                bytes.len() - r.pos
            )));
        }
        FeatureExtractor::new(layers, taps)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv { conv, .. } => {
                    out.push(0);
                    out.extend_from_slice(&(conv.out_channels() as u32).to_le_bytes());
                    out.extend_from_slice(&(conv.in_channels() as u32).to_le_bytes());
                    for v in conv.weights().iter().chain(conv.bias()) {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                LayerSpec::Relu { .. } => out.push(1),
                LayerSpec::Pool { .. } => out.push(2),
            }
        }
        out.extend_from_slice(&(self.taps.len() as u32).to_le_bytes());
        for &t in &self.taps {
            out.extend_from_slice(&(t as u32).to_le_bytes());
        }
        out
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], ()> {
        let end = self.pos.checked_add(n).ok_or(())?;
        let s = self.bytes.get(self.pos..end).ok_or(())?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, ()> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, ()> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> std::result::Result<Vec<f32>, ()> {
        let raw = self.take(n.checked_mul(4).ok_or(())?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
