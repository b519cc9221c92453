//! Toy latent diffusion: convolutional autoencoder, conditional denoiser
//! with classifier-free guidance, linear noise schedule, and a deterministic
//! differentiable few-step sampler.

pub mod ae;
pub mod sampler;
pub mod schedule;
pub mod unet;

pub use ae::{train_autoencoder, AeTrainConfig, Autoencoder};
pub use sampler::{sample_detached, sample_node, Trajectory};
pub use schedule::NoiseSchedule;
pub use unet::{train_denoiser, combine_cfg, Denoiser, DenoiserCfg, DenoiserTrainConfig};

use tensor::checkpoint::CheckpointError;
use tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("timestep {t} outside schedule range 0..={t_train}")]
    BadTimestep { t: usize, t_train: usize },
    #[error("sampling steps {steps} invalid for schedule of {t_train} training steps")]
    BadSteps { steps: usize, t_train: usize },
    #[error("unknown class id {id} (model has {n_classes} classes + null)")]
    UnknownClass { id: usize, n_classes: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("loss became non-finite at step {step} (last finite loss {last_finite})")]
    NanLoss { step: usize, last_finite: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Invalid(String),
}
