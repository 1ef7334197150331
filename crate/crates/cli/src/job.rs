//! Turning decoded inputs and a [`JobConfig`] into a core render.

use doodle_core::{render, FeatureExtractor, RenderConfig, RenderInputs, RenderObserver, SemanticMap, Tensor};

use crate::config::JobConfig;
use crate::io::IoError;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Core(#[from] doodle_core::Error),
    #[error("cannot read weights {path}: {source}")]
    Weights {
        path: String,
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit status: 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Core(e) if e.is_validation() => 2,
            _ => 1,
        }
    }

    pub fn is_validation(&self) -> bool {
        self.exit_code() == 2
    }
}

/// Decoded images and maps of one render.
pub struct JobInputs {
    pub content: Tensor,
    pub style: Tensor,
    pub content_map: Option<SemanticMap>,
    pub style_map: Option<SemanticMap>,
}

/// Checks inputs against the config and returns what [`render`] needs.
pub fn prepare(inputs: JobInputs, config: &JobConfig) -> Result<(RenderInputs, RenderConfig), RunError> {
    let render_inputs = RenderInputs {
        content: inputs.content,
        style: inputs.style,
        content_map: inputs.content_map,
        style_map: inputs.style_map,
    };
    render_inputs.validate()?;
    let cfg = config.render_config(render_inputs.content.height(), render_inputs.content.width())?;
    Ok((render_inputs, cfg))
}

pub fn run(
    inputs: &RenderInputs,
    net: &FeatureExtractor,
    config: &RenderConfig,
    observer: &mut dyn RenderObserver,
) -> Result<Tensor, RunError> {
    Ok(render(inputs, net, config, observer)?)
}

pub fn load_net(path: Option<&std::path::Path>) -> Result<FeatureExtractor, RunError> {
    match path {
        None => Ok(FeatureExtractor::default_net()),
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|source| RunError::Weights {
                path: p.display().to_string(),
                source,
            })?;
            Ok(FeatureExtractor::load_weights(&bytes)?)
        }
    }
}
