//! Quantitative evaluation instruments: faithfulness-vs-frequency curves,
//! FID, NDB, precision/recall/density/coverage, elbow selection, and the
//! mix-training augmentation experiment.

pub mod augment_eval;
pub mod elbow;
pub mod faithfulness;
pub mod fid;
pub mod kmeans;
pub mod ndb;
pub mod prdc;
pub mod report;
pub mod stats;

pub use augment_eval::{augmentation_eval, mix_train, MixConfig};
pub use elbow::{choose_k_by_elbow, elbow};
pub use faithfulness::{faithfulness_curve, spearman, ClassEval, FaithfulnessCurve};
pub use fid::fid;
pub use kmeans::{kmeans, kmeans_restarts, KMeansResult};
pub use ndb::{ndb, ndb_with_centroids, NdbResult};
pub use prdc::{prdc, PrdcResult};
pub use report::{EvalReport, NdbSummary};
pub use stats::GaussianStats;

use models::ModelError;
use tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("feature dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("non-finite feature values")]
    NonFinite,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("class {0} missing from the frequency table")]
    MissingFrequency(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
