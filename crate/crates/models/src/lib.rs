//! Frozen reference networks: a unit-norm semantic embedder trained with a
//! supervised contrastive objective, and a balanced evaluation classifier.

pub mod augment;
pub mod classifier;
pub mod embedder;

pub use classifier::{train_classifier, Classifier, ClassifierTrainConfig};
pub use embedder::{
    argmax, build_centroid_table, centroid, linear_probe, supcon_loss_node, train_embedder,
    CentroidTable, Embedder, EmbedderTrainConfig,
};

use tensor::checkpoint::CheckpointError;
use tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty input set")]
    EmptyInput,
    #[error("class id {id} out of range (n_classes = {n_classes})")]
    UnknownClass { id: usize, n_classes: usize },
    #[error("loss became non-finite at step {step} (last finite loss {last_finite})")]
    NanLoss { step: usize, last_finite: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Invalid(String),
}
