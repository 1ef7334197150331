//! Host-testable logic behind the browser bindings.

use doodle_core::patch::patches_of;
use doodle_core::{
    auto_gamma, concat_semantic, downsample_map, nearest_neighbors, Error, FeatureExtractor, Gamma, RenderConfig,
    RenderInputs, Renderer, Result, SemanticMap, Silent, Tensor,
};

/// Largest side accepted by the demo, to keep the page responsive.
pub const MAX_SIDE: usize = 128;

fn check_rgba(rgba: &[u8], width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE {
        return Err(Error::Size(format!(
            "demo images must be between 1 and {MAX_SIDE} pixels per side, got {width}x{height}"
        )));
    }
    if rgba.len() != width * height * 4 {
        return Err(Error::Shape(format!(
            "expected {} RGBA bytes for {width}x{height}, got {}",
            width * height * 4,
            rgba.len()
        )));
    }
    Ok(())
}

fn planar(rgba: &[u8], channels: usize, width: usize, height: usize) -> Tensor {
    Tensor::from_fn(channels, height, width, |c, y, x| rgba[(y * width + x) * 4 + c] as f32)
}

/// Canvas pixels as a `3 × H × W` image; alpha is dropped.
pub fn rgba_to_image(rgba: &[u8], width: usize, height: usize) -> Result<Tensor> {
    check_rgba(rgba, width, height)?;
    Ok(planar(rgba, 3, width, height))
}

/// Canvas pixels as an RGB annotation map (`M = 3`).
pub fn rgba_to_map(rgba: &[u8], width: usize, height: usize) -> Result<SemanticMap> {
    check_rgba(rgba, width, height)?;
    Ok(SemanticMap::new(planar(rgba, 3, width, height)))
}

/// Opaque RGBA bytes of a `3 × H × W` tensor, rounded and clamped.
pub fn image_to_rgba(t: &Tensor) -> Vec<u8> {
    let (_, h, w) = t.shape();
    let mut out = Vec::with_capacity(h * w * 4);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push(t.at(c, y, x).round().clamp(0.0, 255.0) as u8);
            }
            out.push(255);
        }
    }
    out
}

/// Which style label every content patch was matched to.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchView {
    /// Content-sized RGBA image painted with the matched style label colors.
    pub rgba: Vec<u8>,
    /// Share of single-label content patches matched to the same label.
    pub agreement: f64,
    /// Semantic weight actually used.
    pub gamma: f32,
}

fn same_label(a: &Tensor, ay: usize, ax: usize, b: &Tensor, by: usize, bx: usize) -> bool {
    (0..a.channels()).all(|c| (a.at(c, ay, ax) - b.at(c, by, bx)).abs() < 1.0)
}

/// Matches content patches to style patches at `tap` with semantic weight
/// `gamma_scale × auto_gamma`.
pub fn match_labels(
    net: &FeatureExtractor,
    content: &Tensor,
    style: &Tensor,
    content_map: &SemanticMap,
    style_map: &SemanticMap,
    tap: &str,
    gamma_scale: f32,
) -> Result<MatchView> {
    let k = 3;
    let xc = net.extract(content)?;
    let xs = net.extract(style)?;
    let (xc, xs) = match (xc.get(tap), xs.get(tap)) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        _ => return Err(Error::Config(format!("unknown tap {tap:?}"))),
    };
    let mc = downsample_map(content_map, xc.height(), xc.width())?;
    let ms = downsample_map(style_map, xs.height(), xs.width())?;
    let gamma = if gamma_scale == 0.0 {
        0.0
    } else {
        gamma_scale * auto_gamma(&xs, &ms)?
    };
    let cur = patches_of(concat_semantic(&xc, &mc, gamma)?.tensor(), k)?;
    let sty = patches_of(concat_semantic(&xs, &ms, gamma)?.tensor(), k)?;
    let nn = nearest_neighbors(&cur, &sty)?;

    let (th, tw) = (xc.height(), xc.width());
    let mut labels = Tensor::zeros(3, th, tw);
    let (mut interior, mut agree) = (0usize, 0usize);
    let r = k / 2;
    for (i, &j) in nn.indices.iter().enumerate() {
        let (py, px) = cur.position(i);
        let (sy, sx) = sty.position(j);
        let (cy, cx, ty, tx) = (py + r, px + r, sy + r, sx + r);
        for c in 0..3 {
            labels.set(c, cy, cx, ms.at(c.min(ms.channels() - 1), ty, tx));
        }
        let pure = (0..k * k).all(|d| same_label(&mc, py + d / k, px + d % k, &mc, cy, cx));
        if pure {
            interior += 1;
            agree += usize::from(same_label(&mc, cy, cx, &ms, ty, tx));
        }
    }
    // border cells without a patch centre keep the content map's own label
    for y in 0..th {
        for x in 0..tw {
            let inside = y >= r && y < th - r && x >= r && x < tw - r;
            if !inside {
                for c in 0..3 {
                    labels.set(c, y, x, mc.at(c.min(mc.channels() - 1), y, x));
                }
            }
        }
    }
    let (h, w) = (content.height(), content.width());
    let full = Tensor::from_fn(3, h, w, |c, y, x| labels.at(c, y * th / h, x * tw / w));
    Ok(MatchView {
        rgba: image_to_rgba(&full),
        agreement: if interior == 0 { 1.0 } else { agree as f64 / interior as f64 },
        gamma,
    })
}

/// Automatic semantic weight for a style image and its map at `tap`.
pub fn auto_gamma_at(net: &FeatureExtractor, style: &Tensor, style_map: &SemanticMap, tap: &str) -> Result<f32> {
    let taps = net.extract(style)?;
    let x = taps
        .get(tap)
        .ok_or_else(|| Error::Config(format!("unknown tap {tap:?}")))?;
    let m = downsample_map(style_map, x.height(), x.width())?;
    auto_gamma(x, &m)
}

/// Settings of an interactive render.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSettings {
    pub alpha: f64,
    pub beta: f64,
    /// Negative selects the automatic weight.
    pub gamma: f32,
    pub iters_per_level: usize,
    pub seed: u64,
}

impl StepSettings {
    pub fn config(&self) -> RenderConfig {
        RenderConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: if self.gamma < 0.0 { Gamma::Auto } else { Gamma::Fixed(self.gamma) },
            iters_per_resolution: self.iters_per_level,
            seed: self.seed,
            ..RenderConfig::default()
        }
    }
}

/// A render advanced one outer iteration per call.
pub struct StepRender {
    renderer: Renderer<'static>,
    last_loss: f64,
}

impl StepRender {
    pub fn new(net: &'static FeatureExtractor, inputs: RenderInputs, settings: StepSettings) -> Result<Self> {
        Ok(StepRender {
            renderer: Renderer::new(net, inputs, settings.config())?,
            last_loss: f64::NAN,
        })
    }

    /// Runs `n` iterations; returns `false` once the render is complete.
    pub fn step(&mut self, n: usize) -> Result<bool> {
        for _ in 0..n {
            match self.renderer.step(&mut Silent)? {
                Some(rec) => self.last_loss = rec.report.total,
                None => break,
            }
        }
        Ok(!self.renderer.is_done())
    }

    pub fn loss(&self) -> f64 {
        self.last_loss
    }

    pub fn level(&self) -> usize {
        self.renderer.level()
    }

    pub fn levels(&self) -> usize {
        self.renderer.plan().levels.len()
    }

    /// Current image, clamped for display.
    pub fn image(&self) -> Tensor {
        match self.renderer.output() {
            Some(t) => t,
            None => match self.renderer.current() {
                Some(t) => t.clamp(0.0, 255.0),
                None => {
                    let (h, w) = self.renderer.plan().levels[0];
                    Tensor::zeros(3, h, w)
                }
            },
        }
    }
}
