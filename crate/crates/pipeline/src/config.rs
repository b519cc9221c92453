//! Experiment configuration: one TOML file covering every stage, with a
//! content hash that stamps all artifacts produced from it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use synthdata::DatasetSpec;

use crate::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n_classes: usize,
    /// Training images for the most frequent class.
    pub head_count: usize,
    /// Geometric decay ratio: class i gets round(head_count · decayⁱ) images.
    pub decay: f64,
    pub image_size: usize,
    pub test_per_class: usize,
    /// Also export PNG files and a manifest (slower; the pipeline itself
    /// works from the in-memory rendering either way).
    pub export_png: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            n_classes: 12,
            head_count: 2000,
            decay: 0.58,
            image_size: 16,
            test_per_class: 200,
            export_png: false,
        }
    }
}

impl DatasetSection {
    pub fn to_spec(&self, seed: u64) -> DatasetSpec {
        DatasetSpec {
            n_classes: self.n_classes,
            head_count: self.head_count,
            decay: self.decay,
            image_size: self.image_size,
            test_per_class: self.test_per_class,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSection {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 8,
            lr: 2e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserSection {
    pub base_width: usize,
    pub emb_dim: usize,
    pub t_train: usize,
    pub groups: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub p_uncond: f64,
}

impl Default for DenoiserSection {
    fn default() -> Self {
        Self {
            base_width: 16,
            emb_dim: 32,
            t_train: 60,
            groups: 4,
            steps: 3000,
            batch_size: 8,
            lr: 2e-3,
            p_uncond: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSection {
    pub dim: usize,
    pub steps: usize,
    pub per_class: usize,
    pub lr: f64,
    pub temperature: f64,
}

impl Default for EmbedderSection {
    fn default() -> Self {
        Self {
            dim: 16,
            steps: 500,
            per_class: 2,
            lr: 2e-3,
            temperature: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub steps: usize,
    pub per_class: usize,
    pub lr: f64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            steps: 800,
            per_class: 2,
            lr: 2e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedOptSection {
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub patience: usize,
    pub t_stab: usize,
    pub sampling_steps: usize,
    pub guidance_scale: f64,
    /// Replace the plain semantic term with the contrastive
    /// softmax-over-centroids form.
    pub contrastive: bool,
}

impl Default for SeedOptSection {
    fn default() -> Self {
        Self {
            lambda: 0.9,
            learning_rate: 0.15,
            max_iters: 150,
            patience: 3,
            t_stab: 2,
            sampling_steps: 7,
            guidance_scale: 7.5,
            contrastive: false,
        }
    }
}

impl SeedOptSection {
    pub fn to_config(&self, seed: u64) -> seedopt::OptimizationConfig {
        seedopt::OptimizationConfig {
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            max_iters: self.max_iters,
            patience: self.patience,
            t_stab: self.t_stab,
            sampling_steps: self.sampling_steps,
            guidance_scale: self.guidance_scale,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    /// Budget for the one warm-start run per class.
    pub warm_iters: usize,
    /// Budget for each per-image subset re-optimization.
    pub subset_iters: usize,
    /// "k-with-replacement" or "full-set".
    pub subset_rule: String,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            warm_iters: 300,
            subset_iters: 25,
            subset_rule: "k-with-replacement".into(),
        }
    }
}

impl BootstrapSection {
    pub fn rule(&self) -> Result<seedopt::SubsetRule, PipelineError> {
        match self.subset_rule.as_str() {
            "k-with-replacement" => Ok(seedopt::SubsetRule::KWithReplacement),
            "full-set" => Ok(seedopt::SubsetRule::FullSet),
            other => Err(PipelineError::Config(format!(
                "unknown subset_rule {other:?}; use \"k-with-replacement\" or \"full-set\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Images generated per class per arm; every evaluation draws from
    /// these pools.
    pub gen_per_class: usize,
    /// Reference images per class for seed optimization.
    pub refs_per_class: usize,
    /// Feature-set size per side for FID / PRDC / NDB.
    pub n_eval_samples: usize,
    pub prdc_k: usize,
    pub ndb_bins: usize,
    pub ndb_alpha: f64,
    /// Frequency-band thresholds for the faithfulness curve.
    pub band_hi: u64,
    pub band_lo: u64,
    /// Images for the warm-vs-cold bootstrap iteration comparison.
    pub bootstrap_images: usize,
    /// Generated images per class in the augmentation experiment.
    pub aug_per_class: usize,
    /// Real images per class in the augmentation experiment (few-shot).
    pub aug_real_per_class: usize,
    pub aug_steps: usize,
    pub aug_batch_per_class: usize,
    pub aug_lr: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            gen_per_class: 200,
            refs_per_class: 8,
            n_eval_samples: 1000,
            prdc_k: 5,
            ndb_bins: 20,
            ndb_alpha: 0.05,
            band_hi: 500,
            band_lo: 50,
            bootstrap_images: 10,
            aug_per_class: 200,
            aug_real_per_class: 1,
            aug_steps: 300,
            aug_batch_per_class: 1,
            aug_lr: 2e-3,
        }
    }
}

/// Complete experiment description. `Default` is the 12-class long-tail
/// benchmark; an empty TOML file parses to exactly that.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetSection,
    pub autoencoder: AutoencoderSection,
    pub denoiser: DenoiserSection,
    pub embedder: EmbedderSection,
    pub classifier: ClassifierSection,
    pub seedopt: SeedOptSection,
    pub bootstrap: BootstrapSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(format!("config parse: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            PipelineError::Config(format!("read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Content hash over every field except `out_dir`: relocating the output
    /// directory must not invalidate artifacts produced from the same
    /// scientific configuration.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let mut hasher = Sha256::new();
        hasher.update(canonical.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.dataset
            .to_spec(self.seed)
            .validate()
            .map_err(|e| PipelineError::Config(format!("dataset: {e}")))?;
        self.seedopt
            .to_config(self.seed)
            .validate()
            .map_err(|e| PipelineError::Config(format!("seedopt: {e}")))?;
        self.bootstrap.rule()?;
        if self.eval.gen_per_class == 0 {
            return Err(PipelineError::Config("gen_per_class must be ≥ 1".into()));
        }
        if self.eval.refs_per_class == 0 {
            return Err(PipelineError::Config("refs_per_class must be ≥ 1".into()));
        }
        if self.eval.aug_per_class > self.eval.gen_per_class {
            return Err(PipelineError::Config(format!(
                "aug_per_class {} exceeds the generated pool size {}",
                self.eval.aug_per_class, self.eval.gen_per_class
            )));
        }
        if !(0.0..1.0).contains(&self.eval.ndb_alpha) || self.eval.ndb_alpha <= 0.0 {
            return Err(PipelineError::Config(format!(
                "ndb_alpha must lie in (0,1), got {}",
                self.eval.ndb_alpha
            )));
        }
        if self.eval.band_hi <= self.eval.band_lo || self.eval.band_lo == 0 {
            return Err(PipelineError::Config(format!(
                "band thresholds need hi > lo > 0, got hi {} lo {}",
                self.eval.band_hi, self.eval.band_lo
            )));
        }
        Ok(())
    }
}
