//! Shared test fixtures: a reduced experiment configuration small enough to
//! run end to end in seconds.

use std::path::Path;

use pipeline::config::ExperimentConfig;

/// Four classes with train counts [40, 20, 10, 5] at 16×16, tiny training
/// budgets, and small evaluation pools.
pub fn smoke_config(out: &Path, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = seed;
    cfg.out_dir = out.to_path_buf();
    cfg.dataset.n_classes = 4;
    cfg.dataset.head_count = 40;
    cfg.dataset.decay = 0.5;
    cfg.dataset.image_size = 16;
    cfg.dataset.test_per_class = 12;
    cfg.autoencoder.steps = 60;
    cfg.autoencoder.batch_size = 4;
    cfg.denoiser.base_width = 8;
    cfg.denoiser.emb_dim = 16;
    cfg.denoiser.t_train = 50;
    cfg.denoiser.groups = 2;
    cfg.denoiser.steps = 80;
    cfg.denoiser.batch_size = 4;
    cfg.embedder.dim = 8;
    cfg.embedder.steps = 40;
    cfg.classifier.steps = 60;
    cfg.seedopt.max_iters = 4;
    cfg.seedopt.patience = 2;
    cfg.seedopt.t_stab = 1;
    cfg.seedopt.sampling_steps = 4;
    cfg.seedopt.guidance_scale = 3.0;
    cfg.bootstrap.warm_iters = 4;
    cfg.bootstrap.subset_iters = 2;
    cfg.eval.gen_per_class = 6;
    cfg.eval.refs_per_class = 3;
    cfg.eval.n_eval_samples = 24;
    cfg.eval.prdc_k = 2;
    cfg.eval.ndb_bins = 3;
    cfg.eval.band_hi = 30;
    cfg.eval.band_lo = 8;
    cfg.eval.bootstrap_images = 2;
    cfg.eval.aug_per_class = 4;
    cfg.eval.aug_real_per_class = 1;
    cfg.eval.aug_steps = 20;
    cfg.eval.aug_batch_per_class = 1;
    cfg.validate().expect("smoke config is valid");
    cfg
}
