//! End-to-end orchestration: load a TOML experiment config, run the dataset →
//! training → generation → evaluation pipeline, and stamp every artifact with
//! the config hash so stale outputs can't be mixed across configurations.

pub mod artifacts;
pub mod config;
pub mod experiment;

pub use artifacts::{check_stamp, save_stamped, write_tsv, OutDirs, HASH_META_KEY};
pub use config::ExperimentConfig;
pub use experiment::{run_experiment, ExperimentOutput, TrainedStack};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error(
        "artifact {artifact} was produced under config hash {found}, \
         but the current config hashes to {expected}"
    )]
    HashMismatch {
        artifact: String,
        found: String,
        expected: String,
    },
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Synth(#[from] synthdata::SynthError),
    #[error(transparent)]
    Diffusion(#[from] diffusion::DiffusionError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
    #[error(transparent)]
    SeedOpt(#[from] seedopt::SeedOptError),
    #[error(transparent)]
    Eval(#[from] evalkit::EvalError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
