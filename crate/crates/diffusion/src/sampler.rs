//! Deterministic few-step sampler (DDIM with η = 0), differentiable from
//! any trajectory element back to the seed.

use tensor::nn::Leafs;
use tensor::{Graph, NodeId, Tensor};

use crate::schedule::NoiseSchedule;
use crate::unet::Denoiser;
use crate::DiffusionError;

/// The denoising path [z_T, …, z_0] plus each step's predicted clean latent.
pub struct Trajectory {
    /// Length `steps + 1`; first element is the seed node, last is z_0.
    pub zs: Vec<NodeId>,
    /// Length `steps`; ẑ_0(t_i) for each visited timestep, in visit order.
    pub z0_preds: Vec<NodeId>,
    /// The timesteps visited, descending.
    pub timesteps: Vec<usize>,
}

impl Trajectory {
    pub fn z0(&self) -> NodeId {
        *self.zs.last().expect("non-empty trajectory")
    }

    /// The last `n` predicted clean latents in generation order (the ones
    /// closest to z_0).
    pub fn last_z0_preds(&self, n: usize) -> &[NodeId] {
        &self.z0_preds[self.z0_preds.len() - n..]
    }
}

/// Run the sampler inside an existing graph so gradients flow to `seed`.
///
/// Per visited timestep t (descending, evenly strided):
///   ε̂   = guided_predict(z_t, t, c, s)
///   ẑ_0 = (z_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t
///   z_next = √ᾱ_next·ẑ_0 + √(1−ᾱ_next)·ε̂        (ᾱ_next of the next
///            visited timestep, 1 for the final hop, making z_next = ẑ_0)
pub fn sample_node(
    g: &Graph,
    lf: &mut Leafs,
    den: &Denoiser,
    schedule: &NoiseSchedule,
    seed: NodeId,
    class_id: usize,
    steps: usize,
    guidance_scale: f64,
) -> Result<Trajectory, DiffusionError> {
    let timesteps = schedule.timesteps(steps)?;
    let mut zs = Vec::with_capacity(steps + 1);
    let mut z0_preds = Vec::with_capacity(steps);
    let mut z = seed;
    zs.push(z);
    for (i, &t) in timesteps.iter().enumerate() {
        let eps_hat = den.guided_predict(g, lf, z, t, class_id, guidance_scale)?;
        let abar = schedule.alpha_bar(t);
        let z0_hat = g.mul_scalar(
            g.sub(z, g.mul_scalar(eps_hat, (1.0 - abar).sqrt()))?,
            1.0 / abar.sqrt(),
        );
        z0_preds.push(z0_hat);
        let abar_next = match timesteps.get(i + 1) {
            Some(&tn) => schedule.alpha_bar(tn),
            None => 1.0,
        };
        z = g.add(
            g.mul_scalar(z0_hat, abar_next.sqrt()),
            g.mul_scalar(eps_hat, (1.0 - abar_next).sqrt()),
        )?;
        zs.push(z);
    }
    Ok(Trajectory {
        zs,
        z0_preds,
        timesteps,
    })
}

/// Detached convenience: sample once and return the final clean latent plus
/// the full trajectory values.
pub fn sample_detached(
    den: &Denoiser,
    schedule: &NoiseSchedule,
    seed: &Tensor,
    class_id: usize,
    steps: usize,
    guidance_scale: f64,
) -> Result<(Tensor, Vec<Tensor>), DiffusionError> {
    let g = Graph::new();
    let mut lf = Leafs::new(&den.ps);
    let seed_node = g.leaf(seed);
    let traj = sample_node(&g, &mut lf, den, schedule, seed_node, class_id, steps, guidance_scale)?;
    let values = traj.zs.iter().map(|&id| g.value(id)).collect();
    Ok((g.value(traj.z0()), values))
}
