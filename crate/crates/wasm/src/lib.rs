//! WebAssembly bindings for the single-page demo in `www/`.

pub mod demo;

use std::sync::OnceLock;

use doodle_core::{FeatureExtractor, RenderInputs};
use wasm_bindgen::prelude::*;

use demo::{rgba_to_image, rgba_to_map, StepRender, StepSettings};

fn net() -> &'static FeatureExtractor {
    static NET: OnceLock<FeatureExtractor> = OnceLock::new();
    NET.get_or_init(FeatureExtractor::default_net)
}

fn js_err(e: doodle_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Result of [`match_labels`].
#[wasm_bindgen]
pub struct MatchResult {
    rgba: Vec<u8>,
    agreement: f64,
    gamma: f32,
}

#[wasm_bindgen]
impl MatchResult {
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn agreement(&self) -> f64 {
        self.agreement
    }

    #[wasm_bindgen(getter)]
    pub fn gamma(&self) -> f32 {
        self.gamma
    }
}

/// Paints every content patch with the label of its matched style patch.
/// All four buffers are `width × height` RGBA canvas pixels.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn match_labels(
    content: &[u8],
    style: &[u8],
    content_map: &[u8],
    style_map: &[u8],
    width: usize,
    height: usize,
    tap: &str,
    gamma_scale: f32,
) -> Result<MatchResult, JsError> {
    let view = demo::match_labels(
        net(),
        &rgba_to_image(content, width, height).map_err(js_err)?,
        &rgba_to_image(style, width, height).map_err(js_err)?,
        &rgba_to_map(content_map, width, height).map_err(js_err)?,
        &rgba_to_map(style_map, width, height).map_err(js_err)?,
        tap,
        gamma_scale,
    )
    .map_err(js_err)?;
    Ok(MatchResult {
        rgba: view.rgba,
        agreement: view.agreement,
        gamma: view.gamma,
    })
}

#[wasm_bindgen]
pub fn auto_gamma(style: &[u8], style_map: &[u8], width: usize, height: usize, tap: &str) -> Result<f32, JsError> {
    demo::auto_gamma_at(
        net(),
        &rgba_to_image(style, width, height).map_err(js_err)?,
        &rgba_to_map(style_map, width, height).map_err(js_err)?,
        tap,
    )
    .map_err(js_err)
}

#[wasm_bindgen]
pub fn tap_names() -> Vec<String> {
    net().tap_names()
}

/// Interactive render driven from `requestAnimationFrame`.
#[wasm_bindgen]
pub struct Session {
    inner: StepRender,
}

#[wasm_bindgen]
impl Session {
    /// Pass empty map buffers to render without annotations; a negative
    /// `gamma` selects the automatic weight.
    #[wasm_bindgen(constructor)]
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        content: &[u8],
        style: &[u8],
        content_map: &[u8],
        style_map: &[u8],
        width: usize,
        height: usize,
        alpha: f64,
        beta: f64,
        gamma: f32,
        iters_per_level: usize,
        seed: u32,
    ) -> Result<Session, JsError> {
        let map = |m: &[u8]| (!m.is_empty()).then(|| rgba_to_map(m, width, height)).transpose();
        let inputs = RenderInputs {
            content: rgba_to_image(content, width, height).map_err(js_err)?,
            style: rgba_to_image(style, width, height).map_err(js_err)?,
            content_map: map(content_map).map_err(js_err)?,
            style_map: map(style_map).map_err(js_err)?,
        };
        let settings = StepSettings {
            alpha,
            beta,
            gamma,
            iters_per_level,
            seed: seed as u64,
        };
        Ok(Session {
            inner: StepRender::new(net(), inputs, settings).map_err(js_err)?,
        })
    }

    /// Runs `n` iterations; `false` once finished.
    pub fn step(&mut self, n: usize) -> Result<bool, JsError> {
        self.inner.step(n).map_err(js_err)
    }

    pub fn rgba(&self) -> Vec<u8> {
        demo::image_to_rgba(&self.inner.image())
    }

    pub fn width(&self) -> usize {
        self.inner.image().width()
    }

    pub fn height(&self) -> usize {
        self.inner.image().height()
    }

    pub fn loss(&self) -> f64 {
        self.inner.loss()
    }

    pub fn level(&self) -> usize {
        self.inner.level()
    }

    pub fn levels(&self) -> usize {
        self.inner.levels()
    }
}
