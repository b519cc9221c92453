//! Artifact plumbing: every file the pipeline writes is stamped with the
//! config hash, and every file it reads is checked against the hash of the
//! configuration currently in force.

use std::fs;
use std::path::{Path, PathBuf};

use tensor::checkpoint::Checkpoint;

use crate::PipelineError;

pub const HASH_META_KEY: &str = "config_hash";

/// Standard output layout under one experiment directory.
pub struct OutDirs {
    pub root: PathBuf,
    pub models: PathBuf,
    pub traces: PathBuf,
    pub eval: PathBuf,
    pub dataset: PathBuf,
}

impl OutDirs {
    pub fn create(root: &Path) -> Result<Self, PipelineError> {
        let dirs = Self {
            root: root.to_path_buf(),
            models: root.join("models"),
            traces: root.join("traces"),
            eval: root.join("eval"),
            dataset: root.join("dataset"),
        };
        for d in [&dirs.root, &dirs.models, &dirs.traces, &dirs.eval] {
            fs::create_dir_all(d)?;
        }
        Ok(dirs)
    }
}

/// Stamp a checkpoint with the config hash and write it.
pub fn save_stamped(
    mut ck: Checkpoint,
    hash: &str,
    path: &Path,
) -> Result<(), PipelineError> {
    ck.set_meta(HASH_META_KEY, hash);
    ck.save(path)
        .map_err(|e| PipelineError::Artifact(format!("write {}: {e}", path.display())))
}

/// Verify that the checkpoint at `path` was produced under `expected` before
/// the caller deserializes a model from it.
pub fn check_stamp(path: &Path, expected: &str) -> Result<(), PipelineError> {
    let ck = Checkpoint::load(path)
        .map_err(|e| PipelineError::Artifact(format!("read {}: {e}", path.display())))?;
    match ck.meta.get(HASH_META_KEY) {
        Some(found) if found == expected => Ok(()),
        Some(found) => Err(PipelineError::HashMismatch {
            artifact: path.display().to_string(),
            found: found.clone(),
            expected: expected.to_string(),
        }),
        None => Err(PipelineError::HashMismatch {
            artifact: path.display().to_string(),
            found: "<unstamped>".to_string(),
            expected: expected.to_string(),
        }),
    }
}

/// TSV with a `# config_hash<TAB>…` header line.
pub fn write_tsv(path: &Path, hash: &str, body: &str) -> Result<(), PipelineError> {
    let text = format!("# {HASH_META_KEY}\t{hash}\n{body}");
    fs::write(path, text)
        .map_err(|e| PipelineError::Artifact(format!("write {}: {e}", path.display())))
}

/// Loss-per-step trace.
pub fn write_loss_trace(path: &Path, hash: &str, losses: &[f64]) -> Result<(), PipelineError> {
    let mut body = String::from("step\tloss\n");
    for (i, l) in losses.iter().enumerate() {
        body.push_str(&format!("{i}\t{l}\n"));
    }
    write_tsv(path, hash, &body)
}
