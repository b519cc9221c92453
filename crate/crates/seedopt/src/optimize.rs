//! Gradient descent on the initial noise tensor z_T through the frozen
//! sampler/decoder/embedder stack, with a windowed stopping rule.

use std::io::Write;

use diffusion::{sample_node, Autoencoder, Denoiser, NoiseSchedule};
use models::{CentroidTable, Embedder};
use tensor::nn::Leafs;
use tensor::optim::Adam;
use tensor::rng::{randn, stream};
use tensor::{Graph, Tensor};

use crate::losses::{
    appearance_loss_node, check_lambda, contrastive_semantic_loss_node, semantic_loss_node,
};
use crate::reference::ReferenceSet;
use crate::SeedOptError;

/// The frozen model stack the seed is optimized through. Borrowed immutably,
/// so the optimizer cannot touch any weight.
pub struct FrozenStack<'a> {
    pub ae: &'a Autoencoder,
    pub den: &'a Denoiser,
    pub schedule: &'a NoiseSchedule,
    pub emb: &'a Embedder,
}

impl FrozenStack<'_> {
    /// Combined weight digest of every frozen model, for freeze checks.
    pub fn digest(&self) -> String {
        format!(
            "ae:{} den:{} emb:{}",
            self.ae.weight_digest(),
            self.den.weight_digest(),
            self.emb.weight_digest()
        )
    }

    pub fn validate(&self) -> Result<(), SeedOptError> {
        let lat = self.ae.latent_shape();
        if lat[0] != self.den.cfg.latent_channels {
            return Err(SeedOptError::BadConfig(format!(
                "autoencoder latent channels {} vs denoiser {}",
                lat[0], self.den.cfg.latent_channels
            )));
        }
        if self.ae.image_size != self.emb.image_size {
            return Err(SeedOptError::BadConfig(format!(
                "autoencoder image size {} vs embedder {}",
                self.ae.image_size, self.emb.image_size
            )));
        }
        Ok(())
    }

    /// Decode the image a seed generates: sample to z_0, then decode.
    pub fn generate(
        &self,
        seed: &Tensor,
        class_id: usize,
        steps: usize,
        guidance_scale: f64,
    ) -> Result<Tensor, SeedOptError> {
        let (z0, _) =
            diffusion::sample_detached(self.den, self.schedule, seed, class_id, steps, guidance_scale)?;
        Ok(self.ae.decode(&z0)?)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationConfig {
    /// Blend weight: total = λ·semantic + (1−λ)·appearance.
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop after this many consecutive loss increases have been exceeded.
    pub patience: usize,
    /// Trailing denoising steps whose predicted clean latents feed the
    /// stabilized semantic loss (t_stab + 1 decoded predictions).
    pub t_stab: usize,
    pub sampling_steps: usize,
    pub guidance_scale: f64,
    pub seed: u64,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            lambda: 0.9,
            learning_rate: 0.05,
            max_iters: 200,
            patience: 3,
            t_stab: 2,
            sampling_steps: 7,
            guidance_scale: 7.5,
            seed: 0,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<(), SeedOptError> {
        check_lambda(self.lambda)?;
        if self.patience == 0 {
            return Err(SeedOptError::BadConfig("patience must be ≥ 1".into()));
        }
        if self.sampling_steps == 0 {
            return Err(SeedOptError::BadConfig("sampling_steps must be ≥ 1".into()));
        }
        if self.t_stab >= self.sampling_steps {
            return Err(SeedOptError::BadStabilization {
                t_stab: self.t_stab,
                steps: self.sampling_steps,
            });
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(SeedOptError::BadConfig(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Best loss improved by < 1e-4 (relative) over a 10-iteration window.
    Plateau,
    /// Loss rose for more than `patience` consecutive iterations.
    IncreaseLimit,
    /// Iteration budget exhausted.
    MaxIters,
    /// Loss became non-finite; the best finite state was returned.
    NanAbort,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::Plateau => "plateau",
            StopReason::IncreaseLimit => "increase-limit",
            StopReason::MaxIters => "max-iters",
            StopReason::NanAbort => "nan-abort",
        };
        f.write_str(s)
    }
}

/// One observed iteration of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iter: usize,
    pub total: f64,
    pub semantic: f64,
    pub appearance: f64,
    pub seed_norm: f64,
}

/// Windowed stopping rule, separated from the optimizer so it can be driven
/// with synthetic loss sequences. Checks run in precedence order:
/// increase-limit, plateau, max-iters.
#[derive(Debug, Clone)]
pub struct StopDriver {
    patience: usize,
    max_iters: usize,
    window: usize,
    rel_eps: f64,
    seen: usize,
    prev: Option<f64>,
    best: f64,
    consecutive_increases: usize,
    best_history: Vec<f64>,
}

impl StopDriver {
    pub const PLATEAU_WINDOW: usize = 10;
    pub const PLATEAU_REL_EPS: f64 = 1e-4;

    pub fn new(patience: usize, max_iters: usize) -> Self {
        Self {
            patience,
            max_iters,
            window: Self::PLATEAU_WINDOW,
            rel_eps: Self::PLATEAU_REL_EPS,
            seen: 0,
            prev: None,
            best: f64::INFINITY,
            consecutive_increases: 0,
            best_history: Vec::new(),
        }
    }

    /// Feed one total-loss value; `Some(reason)` means stop now.
    pub fn observe(&mut self, total: f64) -> Option<StopReason> {
        if total < self.best {
            self.best = total;
        }
        if let Some(prev) = self.prev {
            if total > prev {
                self.consecutive_increases += 1;
            } else {
                self.consecutive_increases = 0;
            }
        }
        self.prev = Some(total);
        self.best_history.push(self.best);
        self.seen += 1;

        if self.consecutive_increases > self.patience {
            return Some(StopReason::IncreaseLimit);
        }
        if self.seen > self.window {
            let then = self.best_history[self.seen - 1 - self.window];
            let rel = (then - self.best) / f64::max(then.abs(), 1e-12);
            if rel < self.rel_eps {
                return Some(StopReason::Plateau);
            }
        }
        if self.seen >= self.max_iters {
            return Some(StopReason::MaxIters);
        }
        None
    }
}

/// Result of one seed optimization run. The returned seed is the one with
/// the best (lowest) recorded total loss, not necessarily the last iterate.
#[derive(Debug, Clone)]
pub struct OptimizedSeed {
    pub seed: Tensor,
    pub history: Vec<LossRecord>,
    /// Number of recorded iterations (= history length).
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// ‖seed‖₂ of the returned seed.
    pub seed_norm: f64,
    /// Iteration index of the returned seed; 0 when history is empty.
    pub best_iter: usize,
    /// Best recorded total loss; +∞ when history is empty (zero-budget run).
    pub best_total: f64,
}

impl OptimizedSeed {
    /// Per-iteration trace as TSV: iter, total, semantic, appearance,
    /// seed_norm.
    pub fn write_trace<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter\ttotal\tsemantic\tappearance\tseed_norm")?;
        for r in &self.history {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                r.iter, r.total, r.semantic, r.appearance, r.seed_norm
            )?;
        }
        Ok(())
    }
}

fn l2_norm(t: &Tensor) -> f64 {
    t.data().iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Optimize the initial noise tensor z_T against a reference set.
///
/// Each iteration samples with `sampling_steps` DDIM steps conditioned on
/// `class_condition`, decodes and embeds the last `t_stab + 1` predicted
/// clean latents for the stabilized semantic loss (contrastive form when a
/// centroid table is supplied, which replaces the plain term), computes the
/// appearance loss on the final z_0 against the cached reference latents,
/// blends with λ, and updates the seed with Adam. A non-finite loss aborts
/// the run and returns the best finite state observed so far.
pub fn optimize_seed(
    stack: &FrozenStack,
    refs: &ReferenceSet,
    class_condition: usize,
    cfg: &OptimizationConfig,
    contrastive: Option<&CentroidTable>,
    initial_seed: Option<Tensor>,
) -> Result<OptimizedSeed, SeedOptError> {
    cfg.validate()?;
    stack.validate()?;
    let latent_shape = stack.ae.latent_shape();
    let mut seed = match initial_seed {
        Some(s) => {
            if s.shape() != latent_shape {
                return Err(SeedOptError::DimensionMismatch(format!(
                    "initial seed {:?} vs latent shape {:?}",
                    s.shape(),
                    latent_shape
                )));
            }
            s
        }
        None => randn(&latent_shape, &mut stream(cfg.seed, "seedopt/init")),
    };

    let mut adam = Adam::new(cfg.learning_rate);
    let mut driver = StopDriver::new(cfg.patience, cfg.max_iters);
    let mut history: Vec<LossRecord> = Vec::new();
    let mut best_seed = seed.clone();
    let mut best_total = f64::INFINITY;
    let mut best_iter = 0usize;
    let mut stop_reason = StopReason::MaxIters;

    for iter in 0..cfg.max_iters {
        let g = Graph::new();
        let mut lf_den = Leafs::new(&stack.den.ps);
        let mut lf_ae = Leafs::new(&stack.ae.ps);
        let mut lf_emb = Leafs::new(&stack.emb.ps);
        let z_t = g.leaf(&seed);

        let traj = sample_node(
            &g,
            &mut lf_den,
            stack.den,
            stack.schedule,
            z_t,
            class_condition,
            cfg.sampling_steps,
            cfg.guidance_scale,
        )?;

        // stabilized semantic loss over the last t_stab + 1 predictions
        let mut sem_terms = Vec::with_capacity(cfg.t_stab + 1);
        for &pred in traj.last_z0_preds(cfg.t_stab + 1) {
            let img = stack.ae.decode_node(&g, &mut lf_ae, pred)?;
            let v = stack.emb.embed_node(&g, &mut lf_emb, img)?;
            sem_terms.push(match contrastive {
                None => semantic_loss_node(&g, v, refs.centroid())?,
                Some(table) => {
                    contrastive_semantic_loss_node(&g, v, table, refs.target_class())?
                }
            });
        }
        let sem = g.sum_nodes(&sem_terms)?;
        let app = appearance_loss_node(&g, traj.z0(), refs.latents())?;
        let total = g.add(
            g.mul_scalar(sem, cfg.lambda),
            g.mul_scalar(app, 1.0 - cfg.lambda),
        )?;

        let total_v = g.value(total).item();
        if !total_v.is_finite() {
            log::warn!("seed optimization hit non-finite loss at iteration {iter}; aborting");
            stop_reason = StopReason::NanAbort;
            break;
        }
        let record = LossRecord {
            iter,
            total: total_v,
            semantic: g.value(sem).item(),
            appearance: g.value(app).item(),
            seed_norm: l2_norm(&seed),
        };
        history.push(record);
        if total_v < best_total {
            best_total = total_v;
            best_iter = iter;
            best_seed = seed.clone();
        }
        if let Some(reason) = driver.observe(total_v) {
            stop_reason = reason;
            break;
        }

        let grads = g.backward(total)?;
        let grad = grads.get(z_t);
        adam.step_all(std::slice::from_mut(&mut seed), std::slice::from_ref(&grad));
    }

    let seed_norm = l2_norm(&best_seed);
    Ok(OptimizedSeed {
        seed: best_seed,
        iterations: history.len(),
        history,
        stop_reason,
        seed_norm,
        best_iter,
        best_total,
    })
}
