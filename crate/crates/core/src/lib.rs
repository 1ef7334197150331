//! Semantic style transfer by patch matching on annotated feature maps.
//!
//! Activations of a small convolutional network are extended with
//! user-painted annotation channels, style patches are matched by normalized
//! cross-correlation on those extended features, and the image is optimized
//! with L-BFGS over several increasing resolutions.
//!
//! ```no_run
//! use doodle_core::{render, FeatureExtractor, RenderConfig, RenderInputs, Silent, Tensor};
//!
//! let net = FeatureExtractor::default_net();
//! let inputs = RenderInputs {
//!     content: Tensor::filled(3, 64, 64, 128.0),
//!     style: Tensor::filled(3, 64, 64, 64.0),
//!     content_map: None,
//!     style_map: None,
//! };
//! let out = render(&inputs, &net, &RenderConfig::default(), &mut Silent).unwrap();
//! assert_eq!(out.shape(), (3, 64, 64));
//! ```

pub mod error;
pub mod extractor;
pub mod fixture;
pub mod layers;
pub mod optimize;
pub mod patch;
pub mod semantic;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use extractor::{FeatureExtractor, TapSet};
pub use optimize::{render, Gamma, IterationRecord, LossReport, RenderConfig, RenderInputs, RenderLog, RenderObserver, Renderer, Silent};
pub use patch::{extract_patches, nearest_neighbors, style_loss_and_grad, NNAssignment, PatchGrid};
pub use semantic::{auto_gamma, concat_semantic, downsample_map, AugmentedFeatures, SemanticMap};
pub use tensor::Tensor;
