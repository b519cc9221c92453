//! Caption-corpus frequency analysis: streaming n-gram counts over sharded
//! byte ranges, synonym merging into class counts, and head/med/few splits.

pub mod count;
pub mod fixture;
pub mod normalize;
pub mod split;
pub mod synonyms;

pub use count::{count_ngrams, count_phrases, FrequencyTable};
pub use normalize::normalize_caption;
pub use split::{rank_and_split, split_tsv, Band, RankedClass};
pub use synonyms::{merge_synonyms, SynonymMap};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error at byte {offset} of {path}: {source}")]
    Io {
        path: String,
        offset: u64,
        source: std::io::Error,
    },
    #[error("n-gram order {0} unsupported (this pipeline counts n ∈ {{1,2}})")]
    BadOrder(usize),
    #[error("thread count must be ≥ 1")]
    NoThreads,
    #[error("synonym collision: phrase {phrase:?} claimed by classes {first:?} and {second:?}")]
    SynonymCollision {
        phrase: String,
        first: String,
        second: String,
    },
    #[error("invalid thresholds: hi ({hi}) must exceed lo ({lo})")]
    BadThresholds { hi: u64, lo: u64 },
    #[error("{0}")]
    Invalid(String),
}
