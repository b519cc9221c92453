//! Bootstrap generation: one warm-start optimization on the full reference
//! set, then cheap per-image re-optimizations on resampled subsets.

use std::time::Instant;

use models::CentroidTable;
use rand::Rng;
use tensor::rng::stream;
use tensor::Tensor;

use crate::optimize::{optimize_seed, FrozenStack, OptimizationConfig, OptimizedSeed};
use crate::reference::ReferenceSet;
use crate::SeedOptError;

/// How each per-image reference subset is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubsetRule {
    /// k draws with replacement from the k references (classical bootstrap).
    #[default]
    KWithReplacement,
    /// Always the full reference set (ablation / degenerate plan).
    FullSet,
}

#[derive(Debug, Clone)]
pub struct BootstrapPlan {
    /// Iteration budget for the single warm-start run on the full set.
    pub warm_iters: usize,
    /// Iteration budget for each per-subset re-optimization.
    pub subset_iters: usize,
    pub rule: SubsetRule,
    /// Number of images to generate.
    pub n_images: usize,
    /// Stream seed for subset resampling.
    pub seed: u64,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        Self {
            warm_iters: 50,
            subset_iters: 30,
            rule: SubsetRule::KWithReplacement,
            n_images: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapOutput {
    /// Decoded generations, one per requested image.
    pub images: Vec<Tensor>,
    /// The optimized seed behind each image.
    pub seeds: Vec<Tensor>,
    /// Reference indices drawn for each image's subset.
    pub subsets: Vec<Vec<usize>>,
    /// Iterations each per-subset run used before stopping.
    pub per_image_iters: Vec<usize>,
    pub per_image_secs: Vec<f64>,
    /// The warm-start run on the full reference set.
    pub warm: OptimizedSeed,
    pub warm_secs: f64,
}

/// Warm-start once on the full set, then for each image resample a reference
/// subset, re-optimize from the warm seed under the per-subset budget, and
/// decode the result.
pub fn bootstrap_generate(
    stack: &FrozenStack,
    refs: &ReferenceSet,
    class_condition: usize,
    plan: &BootstrapPlan,
    cfg: &OptimizationConfig,
    contrastive: Option<&CentroidTable>,
) -> Result<BootstrapOutput, SeedOptError> {
    if plan.n_images == 0 {
        return Err(SeedOptError::BadConfig("n_images must be ≥ 1".into()));
    }
    let warm_cfg = OptimizationConfig {
        max_iters: plan.warm_iters,
        ..cfg.clone()
    };
    let t0 = Instant::now();
    let warm = optimize_seed(stack, refs, class_condition, &warm_cfg, contrastive, None)?;
    let warm_secs = t0.elapsed().as_secs_f64();
    log::info!(
        "bootstrap warm start: {} iterations ({}), {:.2}s",
        warm.iterations,
        warm.stop_reason,
        warm_secs
    );

    let mut rng = stream(plan.seed, "seedopt/bootstrap");
    let subset_cfg = OptimizationConfig {
        max_iters: plan.subset_iters,
        ..cfg.clone()
    };
    let mut images = Vec::with_capacity(plan.n_images);
    let mut seeds = Vec::with_capacity(plan.n_images);
    let mut subsets = Vec::with_capacity(plan.n_images);
    let mut per_image_iters = Vec::with_capacity(plan.n_images);
    let mut per_image_secs = Vec::with_capacity(plan.n_images);

    for _ in 0..plan.n_images {
        let indices: Vec<usize> = match plan.rule {
            SubsetRule::KWithReplacement => {
                (0..refs.k()).map(|_| rng.gen_range(0..refs.k())).collect()
            }
            SubsetRule::FullSet => (0..refs.k()).collect(),
        };
        let sub = refs.subset(&indices)?;
        let t = Instant::now();
        let out = optimize_seed(
            stack,
            &sub,
            class_condition,
            &subset_cfg,
            contrastive,
            Some(warm.seed.clone()),
        )?;
        per_image_secs.push(t.elapsed().as_secs_f64());
        per_image_iters.push(out.iterations);
        images.push(stack.generate(
            &out.seed,
            class_condition,
            cfg.sampling_steps,
            cfg.guidance_scale,
        )?);
        seeds.push(out.seed);
        subsets.push(indices);
    }

    Ok(BootstrapOutput {
        images,
        seeds,
        subsets,
        per_image_iters,
        per_image_secs,
        warm,
        warm_secs,
    })
}
