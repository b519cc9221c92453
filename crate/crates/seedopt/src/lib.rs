//! Initial-noise optimization: search the diffusion seed space for a noise
//! tensor whose generation matches a small set of reference images, blending
//! a semantic (embedding-space) loss with an appearance (latent MSE) loss.

pub mod bootstrap;
pub mod losses;
pub mod optimize;
pub mod reference;

pub use bootstrap::{bootstrap_generate, BootstrapOutput, BootstrapPlan, SubsetRule};
pub use losses::{
    appearance_loss, appearance_loss_node, contrastive_semantic_loss,
    contrastive_semantic_loss_node, semantic_loss, semantic_loss_node, total_loss,
};
pub use optimize::{
    optimize_seed, FrozenStack, LossRecord, OptimizationConfig, OptimizedSeed, StopDriver,
    StopReason,
};
pub use reference::ReferenceSet;

use diffusion::DiffusionError;
use models::ModelError;
use tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeedOptError {
    #[error("reference set must contain at least one image")]
    EmptyReferences,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("lambda must lie in [0,1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("target class {id} missing from centroid table of {n_classes} classes")]
    MissingClass { id: usize, n_classes: usize },
    #[error("t_stab {t_stab} must be smaller than sampling_steps {steps}")]
    BadStabilization { t_stab: usize, steps: usize },
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
