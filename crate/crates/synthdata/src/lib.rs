//! Procedural long-tailed image dataset: twelve parameterized shape classes
//! rendered at 32×32 with controlled intra-class variation, a geometric
//! frequency decay over the training split, and a balanced test split.

pub mod dataset;
pub mod render;
pub mod spec;

pub use dataset::{load_png, save_png, synth_dataset, write_dataset, Dataset, SynthOutput};
pub use render::{color_jitter, flip_h, render_image, ShapeFamily};
pub use spec::DatasetSpec;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("class {class} would get {count} training images (< 5); raise head_count or decay")]
    TooFewImages { class: usize, count: usize },
    #[error("n_classes must be in 1..={max}, got {got}")]
    BadClassCount { got: usize, max: usize },
    #[error("decay ratio must be in (0, 1], got {0}")]
    BadDecay(f64),
    #[error("image size must be ≥ 8 and even, got {0}")]
    BadImageSize(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("png encode: {0}")]
    Png(#[from] image::ImageError),
}
