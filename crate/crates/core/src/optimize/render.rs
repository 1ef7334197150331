//! Coarse-to-fine rendering: one alternating match/L-BFGS optimization per
//! resolution level, each level seeded from the bilinear upscale of the last.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Gamma, RenderConfig, INIT_NOISE};
use super::lbfgs::{Lbfgs, LbfgsConfig, StepOutcome};
use super::objective::{LevelContext, LevelInputs, LossReport};
use crate::error::{Error, Result};
use crate::extractor::FeatureExtractor;
use crate::semantic::{auto_gamma, check_map_pair, downsample_map, SemanticMap};
use crate::tensor::Tensor;

/// Gradient norm below which a level is considered converged.
const GRAD_TOL: f64 = 1e-9;

/// What happened in one outer iteration: the objective with fresh assignments,
/// then the value after the accepted step under those same assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub report: LossReport,
    /// `None` when the line search failed and the level stopped.
    pub accepted: Option<f64>,
}

/// Hooks called while a render progresses. Returning `false` from
/// [`RenderObserver::on_iteration`] cancels the render.
pub trait RenderObserver {
    /// Called with the starting image of each level.
    fn on_level_start(&mut self, _level: usize, _levels: usize, _init: &Tensor) {}

    fn on_iteration(&mut self, _record: &IterationRecord, _image: &Tensor) -> bool {
        true
    }

    fn on_level_done(&mut self, _level: usize, _image: &Tensor) {}
}

/// Observer that ignores everything.
pub struct Silent;

impl RenderObserver for Silent {}

/// Keeps every iteration record.
#[derive(Debug, Default, Clone)]
pub struct RenderLog {
    pub records: Vec<IterationRecord>,
    pub level_inits: Vec<Tensor>,
    pub level_outputs: Vec<Tensor>,
}

impl RenderObserver for RenderLog {
    fn on_level_start(&mut self, _level: usize, _levels: usize, init: &Tensor) {
        self.level_inits.push(init.clone());
    }

    fn on_iteration(&mut self, record: &IterationRecord, _image: &Tensor) -> bool {
        self.records.push(record.clone());
        true
    }

    fn on_level_done(&mut self, _level: usize, image: &Tensor) {
        self.level_outputs.push(image.clone());
    }
}

/// Content/style images with their optional annotation maps.
#[derive(Debug, Clone)]
pub struct RenderInputs {
    pub content: Tensor,
    pub style: Tensor,
    pub content_map: Option<SemanticMap>,
    pub style_map: Option<SemanticMap>,
}

impl RenderInputs {
    pub fn validate(&self) -> Result<()> {
        for (what, img) in [("content", &self.content), ("style", &self.style)] {
            if img.channels() != 3 {
                return Err(Error::Validation(format!(
                    "{what} image must have 3 channels, got {}",
                    img.channels()
                )));
            }
        }
        match (&self.content_map, &self.style_map) {
            (Some(cm), Some(sm)) => {
                check_map_pair(cm, sm)?;
                cm.check_aspect(self.content.height(), self.content.width())?;
                sm.check_aspect(self.style.height(), self.style.width())?;
                Ok(())
            }
            (None, None) => Ok(()),
            (Some(_), None) => Err(Error::Validation(
                "a content map was given without a style map; both maps are needed and must have the same M channels".into(),
            )),
            (None, Some(_)) => Err(Error::Validation(
                "a style map was given without a content map; both maps are needed and must have the same M channels".into(),
            )),
        }
    }

    pub fn has_maps(&self) -> bool {
        self.content_map.is_some()
    }
}

/// Area resampling when shrinking, bilinear otherwise.
pub fn resample(img: &Tensor, height: usize, width: usize) -> Tensor {
    if (height, width) == (img.height(), img.width()) {
        img.clone()
    } else if height <= img.height() && width <= img.width() {
        img.downsample_area(height, width).expect("target not larger")
    } else {
        img.resize_bilinear(height, width)
    }
}

/// Uniform noise in `mean(channel) ± INIT_NOISE`, per channel of `reference`.
pub fn noise_init(reference: &Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w) = reference.shape();
    let means: Vec<f32> = (0..c).map(|ch| reference.channel_mean(ch) as f32).collect();
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for v in out.plane_mut(ch) {
            *v = means[ch] + rng.gen_range(-INIT_NOISE..=INIT_NOISE);
        }
    }
    out
}

fn style_level_size(style: &Tensor, out: (usize, usize), level: (usize, usize)) -> (usize, usize) {
    let sy = level.0 as f64 / out.0 as f64;
    let sx = level.1 as f64 / out.1 as f64;
    let min = crate::extractor::MIN_IMAGE_SIDE;
    (
        ((style.height() as f64 * sy).round() as usize).max(min),
        ((style.width() as f64 * sx).round() as usize).max(min),
    )
}

/// Resolved per-render settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderPlan {
    pub levels: Vec<(usize, usize)>,
    pub style_layers: Vec<String>,
    pub content_layer: String,
    pub gamma: f32,
}

pub fn plan(net: &FeatureExtractor, inputs: &RenderInputs, config: &RenderConfig) -> Result<RenderPlan> {
    config.validate()?;
    inputs.validate()?;
    let (oh, ow) = config
        .output_size
        .unwrap_or((inputs.content.height(), inputs.content.width()));
    let levels = config.schedule(oh, ow)?;
    let taps = net.tap_names();
    let style_layers = match &config.tap_names {
        Some(names) => {
            for n in names {
                if !taps.contains(n) {
                    return Err(Error::Config(format!("unknown tap {n:?}; available: {taps:?}")));
                }
            }
            names.clone()
        }
        None => taps.clone(),
    };
    let content_layer = match &config.content_layer {
        Some(n) if taps.contains(n) => n.clone(),
        Some(n) => return Err(Error::Config(format!("unknown content tap {n:?}; available: {taps:?}"))),
        None => taps.last().expect("validated net has taps").clone(),
    };
    for &(h, w) in &levels {
        if h < crate::extractor::MIN_IMAGE_SIDE || w < crate::extractor::MIN_IMAGE_SIDE {
            return Err(Error::Size(format!(
                "level {h}x{w} is below the {0}x{0} minimum",
                crate::extractor::MIN_IMAGE_SIDE
            )));
        }
    }
    let gamma = match (config.gamma, &inputs.style_map) {
        (_, None) => 0.0,
        (Gamma::Fixed(g), Some(_)) => g,
        (Gamma::Auto, Some(sm)) => {
            // one global weight per render, measured on the style image at the coarsest level
            let (h, w) = style_level_size(&inputs.style, (oh, ow), levels[0]);
            let style = resample(&inputs.style, h, w);
            let taps = net.extract(&style)?;
            let x = taps.get(&content_layer).expect("content layer is a tap");
            let m = downsample_map(sm, x.height(), x.width())?;
            auto_gamma(x, &m)?
        }
    };
    Ok(RenderPlan {
        levels,
        style_layers,
        content_layer,
        gamma,
    })
}

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn to_tensor(x: &[f64], like: &Tensor) -> Result<Tensor> {
    let (c, h, w) = like.shape();
    Tensor::from_vec(c, h, w, x.iter().map(|&v| v as f32).collect())
        .map_err(|e| Error::NonFinite(format!("optimizer produced an invalid image: {e}")))
}

/// One level of alternating optimization, advanced an outer iteration at a time.
/// Every iteration re-matches patches, then takes one L-BFGS step with those
/// assignments frozen.
pub struct LevelRun<'n> {
    ctx: LevelContext<'n>,
    opt: Lbfgs,
    image: Tensor,
    x: Vec<f64>,
    level: usize,
    iteration: usize,
    finished: bool,
}

impl<'n> LevelRun<'n> {
    pub fn new(ctx: LevelContext<'n>, init: Tensor, level: usize, memory: usize) -> Self {
        LevelRun {
            ctx,
            opt: Lbfgs::new(LbfgsConfig {
                memory,
                ..LbfgsConfig::default()
            }),
            x: to_f64(&init),
            image: init,
            level,
            iteration: 0,
            finished: false,
        }
    }

    pub fn image(&self) -> &Tensor {
        &self.image
    }

    pub fn into_image(self) -> Tensor {
        self.image
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// True once the gradient vanished or the line search gave up.
    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn step(&mut self) -> Result<IterationRecord> {
        let (level, it) = (self.level, self.iteration);
        let fresh = self.ctx.evaluate(&self.image, None)?;
        let mut report = fresh.report.clone();
        report.iteration = it;
        report.level = level;
        if !report.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective {} at level {level} iteration {it}",
                report.total
            )));
        }
        self.iteration += 1;
        let g = to_f64(&fresh.grad);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < GRAD_TOL {
            self.finished = true;
            return Ok(IterationRecord {
                report,
                accepted: Some(fresh.report.total),
            });
        }
        let frozen = fresh.assignments;
        let (ctx, image) = (&self.ctx, &self.image);
        let outcome = self.opt.step(&self.x, fresh.report.total, &g, |trial: &[f64]| {
            let t = to_tensor(trial, image)?;
            let e = ctx.evaluate(&t, Some(&frozen))?;
            Ok((e.report.total, to_f64(&e.grad)))
        })?;
        Ok(match outcome {
            StepOutcome::Accepted { x, value, .. } => {
                self.image = to_tensor(&x, &self.image)?;
                self.x = x;
                IterationRecord {
                    report,
                    accepted: Some(value),
                }
            }
            StepOutcome::LineSearchFailed => {
                self.finished = true;
                IterationRecord {
                    report,
                    accepted: None,
                }
            }
        })
    }
}

/// Runs up to `iters` outer iterations of one level.
pub fn optimize_level(
    ctx: &LevelContext<'_>,
    init: Tensor,
    level: usize,
    iters: usize,
    memory: usize,
    observer: &mut dyn RenderObserver,
) -> Result<Tensor> {
    let mut run = LevelRun::new(ctx.clone(), init, level, memory);
    while run.iteration() < iters && !run.is_finished() {
        let record = run.step()?;
        if !observer.on_iteration(&record, run.image()) {
            return Err(Error::Cancelled);
        }
    }
    Ok(run.into_image())
}

/// Coarse-to-fine render that can be advanced one outer iteration at a time.
pub struct Renderer<'n> {
    net: &'n FeatureExtractor,
    inputs: RenderInputs,
    config: RenderConfig,
    plan: RenderPlan,
    level: usize,
    run: Option<LevelRun<'n>>,
    prev: Option<Tensor>,
}

impl<'n> Renderer<'n> {
    pub fn new(net: &'n FeatureExtractor, inputs: RenderInputs, config: RenderConfig) -> Result<Self> {
        let plan = plan(net, &inputs, &config)?;
        Ok(Renderer {
            net,
            inputs,
            config,
            plan,
            level: 0,
            run: None,
            prev: None,
        })
    }

    pub fn plan(&self) -> &RenderPlan {
        &self.plan
    }

    /// Index of the level being optimized, or the level count when done.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn is_done(&self) -> bool {
        self.level == self.plan.levels.len()
    }

    /// Latest image, unclamped.
    pub fn current(&self) -> Option<&Tensor> {
        self.run.as_ref().map(LevelRun::image).or(self.prev.as_ref())
    }

    fn start_level(&mut self, observer: &mut dyn RenderObserver) -> Result<()> {
        let li = self.level;
        let (h, w) = self.plan.levels[li];
        let out_size = *self.plan.levels.last().expect("non-empty schedule");
        let content = resample(&self.inputs.content, h, w);
        let (sh, sw) = style_level_size(&self.inputs.style, out_size, (h, w));
        let style = resample(&self.inputs.style, sh, sw);
        let level_inputs = LevelInputs {
            content: &content,
            style: &style,
            content_map: self.inputs.content_map.as_ref(),
            style_map: self.inputs.style_map.as_ref(),
        };
        let ctx = LevelContext::build(
            self.net,
            &level_inputs,
            &self.plan.style_layers,
            &self.plan.content_layer,
            self.config.alpha,
            self.config.beta,
            self.plan.gamma,
            self.config.patch_size,
        )?;
        let init = match &self.prev {
            None => noise_init(&content, self.config.seed),
            Some(p) => p.resize_bilinear(h, w),
        };
        observer.on_level_start(li, self.plan.levels.len(), &init);
        self.run = Some(LevelRun::new(ctx, init, li, self.config.lbfgs_memory));
        Ok(())
    }

    /// Runs one outer iteration, starting or finishing levels as needed.
    /// Returns the iteration's record, or `None` once every level is done.
    pub fn step(&mut self, observer: &mut dyn RenderObserver) -> Result<Option<IterationRecord>> {
        if self.is_done() {
            return Ok(None);
        }
        if self.run.is_none() {
            self.start_level(observer)?;
        }
        let run = self.run.as_mut().expect("level started");
        let record = run.step()?;
        if !observer.on_iteration(&record, run.image()) {
            return Err(Error::Cancelled);
        }
        if run.is_finished() || run.iteration() >= self.config.iters_per_resolution {
            let out = self.run.take().expect("level started").into_image();
            observer.on_level_done(self.level, &out);
            self.prev = Some(out);
            self.level += 1;
        }
        Ok(Some(record))
    }

    /// Final image clamped to `[0, 255]`, once done.
    pub fn output(&self) -> Option<Tensor> {
        self.is_done()
            .then(|| self.prev.as_ref().expect("at least one level").clamp(0.0, 255.0))
    }
}

/// Renders `inputs` with `net`, returning the final image clamped to `[0, 255]`.
pub fn render(
    inputs: &RenderInputs,
    net: &FeatureExtractor,
    config: &RenderConfig,
    observer: &mut dyn RenderObserver,
) -> Result<Tensor> {
    let mut r = Renderer::new(net, inputs.clone(), config.clone())?;
    while r.step(observer)?.is_some() {}
    Ok(r.output().expect("render finished"))
}
