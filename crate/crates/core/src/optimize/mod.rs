//! Objective assembly, L-BFGS and the multi-resolution render loop.

pub mod config;
pub mod lbfgs;
pub mod objective;
pub mod render;

pub use config::{Gamma, RenderConfig};
pub use lbfgs::{lbfgs_minimize, Lbfgs, LbfgsConfig, Minimum, StepOutcome, StopReason};
pub use objective::{content_loss_and_grad, total_loss_and_grad, Evaluation, LevelContext, LevelInputs, LossReport};
pub use render::{render, IterationRecord, LevelRun, RenderInputs, RenderLog, RenderObserver, Renderer, Silent};
