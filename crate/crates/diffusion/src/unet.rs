//! Conditional denoiser ε_θ(z_t, t, c): a small UNet over spatial latents
//! with sinusoidal time features and learned class embeddings injected via
//! per-block feature modulation, plus classifier-free guidance support.

use std::path::Path;

use rand::Rng;
use tensor::checkpoint::Checkpoint;
use tensor::nn::{collect_grads, Conv2d, Leafs, Linear, Params, PId};
use tensor::optim::Adam;
use tensor::rng::{randn, stream};
use tensor::{Graph, NodeId, Tensor};

use crate::ae::meta_parse;
use crate::schedule::NoiseSchedule;
use crate::DiffusionError;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserCfg {
    pub latent_channels: usize,
    pub base_width: usize,
    pub emb_dim: usize,
    pub n_classes: usize,
    pub t_train: usize,
    pub groups: usize,
}

impl Default for DenoiserCfg {
    fn default() -> Self {
        Self {
            latent_channels: 4,
            base_width: 16,
            emb_dim: 32,
            n_classes: 12,
            t_train: 1000,
            groups: 4,
        }
    }
}

struct ResBlock {
    scale: Linear,
    shift: Linear,
    conv: Conv2d,
    groups: usize,
}

impl ResBlock {
    fn init(ps: &mut Params, name: &str, ch: usize, emb: usize, groups: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        Self {
            scale: Linear::init(ps, &format!("{name}.scale"), emb, ch, 0.1, rng),
            shift: Linear::init(ps, &format!("{name}.shift"), emb, ch, 0.1, rng),
            conv: Conv2d::init(ps, &format!("{name}.conv"), ch, ch, 3, 1, 1, 1.0, rng),
            groups,
        }
    }

    /// x + conv(silu(modulated_norm(x))) with scale/shift from `cond` [1,emb].
    fn forward(
        &self,
        g: &Graph,
        ps: &Params,
        lf: &mut Leafs,
        x: NodeId,
        cond: NodeId,
    ) -> Result<NodeId, DiffusionError> {
        let c = g.shape(x)[0];
        let n = g.group_norm(x, self.groups, 1e-5)?;
        let sc = g.reshape(self.scale.forward(g, ps, lf, cond)?, &[c, 1, 1])?;
        let sh = g.reshape(self.shift.forward(g, ps, lf, cond)?, &[c, 1, 1])?;
        let m = g.add(g.mul(n, g.add_scalar(sc, 1.0))?, sh)?;
        let y = self.conv.forward(g, ps, lf, g.silu(m)?)?;
        Ok(g.add(x, y)?)
    }
}

pub struct Denoiser {
    pub ps: Params,
    pub cfg: DenoiserCfg,
    conv_in: Conv2d,
    block1: ResBlock,
    down: Conv2d,
    block2: ResBlock,
    up: Conv2d,
    merge: Conv2d,
    block3: ResBlock,
    conv_out: Conv2d,
    t_lin1: Linear,
    t_lin2: Linear,
    class_emb: Vec<PId>,
    /// Training-time probability of dropping the condition, recorded for
    /// checkpoint metadata once trained.
    pub p_uncond: f64,
}

impl Denoiser {
    pub fn new(cfg: DenoiserCfg, seed: u64) -> Self {
        let rng = &mut stream(seed, "denoiser/init");
        let mut ps = Params::new();
        let (cl, w, e) = (cfg.latent_channels, cfg.base_width, cfg.emb_dim);
        let conv_in = Conv2d::init(&mut ps, "in", cl, w, 3, 1, 1, 1.0, rng);
        let block1 = ResBlock::init(&mut ps, "b1", w, e, cfg.groups, rng);
        let down = Conv2d::init(&mut ps, "down", w, 2 * w, 3, 2, 1, 1.0, rng);
        let block2 = ResBlock::init(&mut ps, "b2", 2 * w, e, cfg.groups, rng);
        let up = Conv2d::init(&mut ps, "up", 2 * w, w, 3, 1, 1, 1.0, rng);
        let merge = Conv2d::init(&mut ps, "merge", 2 * w, w, 3, 1, 1, 1.0, rng);
        let block3 = ResBlock::init(&mut ps, "b3", w, e, cfg.groups, rng);
        let conv_out = Conv2d::init(&mut ps, "out", w, cl, 3, 1, 1, 0.1, rng);
        let t_lin1 = Linear::init(&mut ps, "temb1", e, e, 1.0, rng);
        let t_lin2 = Linear::init(&mut ps, "temb2", e, e, 1.0, rng);
        let class_emb = (0..=cfg.n_classes)
            .map(|c| ps.add(&format!("cemb{c}"), randn_scaled_emb(e, rng)))
            .collect();
        Self {
            ps,
            cfg,
            conv_in,
            block1,
            down,
            block2,
            up,
            merge,
            block3,
            conv_out,
            t_lin1,
            t_lin2,
            class_emb,
            p_uncond: 0.1,
        }
    }

    pub fn null_class(&self) -> usize {
        self.cfg.n_classes
    }

    fn check_class(&self, id: usize) -> Result<(), DiffusionError> {
        if id > self.cfg.n_classes {
            return Err(DiffusionError::UnknownClass {
                id,
                n_classes: self.cfg.n_classes,
            });
        }
        Ok(())
    }

    fn check_t(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.cfg.t_train {
            return Err(DiffusionError::BadTimestep {
                t,
                t_train: self.cfg.t_train,
            });
        }
        Ok(())
    }

    /// Sinusoidal features of the (integer) timestep, shape [1, emb_dim].
    fn time_features(&self, t: usize) -> Tensor {
        let d = self.cfg.emb_dim;
        let half = d / 2;
        let mut v = vec![0.0; d];
        for i in 0..half {
            let denom = if half > 1 { (half - 1) as f64 } else { 1.0 };
            let w = (-(10_000.0f64.ln()) * i as f64 / denom).exp();
            v[i] = (t as f64 * w).sin();
            v[half + i] = (t as f64 * w).cos();
        }
        Tensor::new(&[1, d], v).expect("sized buffer")
    }

    /// Combined conditioning vector MLP(t_features) + class embedding,
    /// shape [1, emb_dim].
    fn cond_node(
        &self,
        g: &Graph,
        lf: &mut Leafs,
        t: usize,
        class_id: usize,
    ) -> Result<NodeId, DiffusionError> {
        let tf = g.leaf(&self.time_features(t));
        let h = g.silu(self.t_lin1.forward(g, &self.ps, lf, tf)?)?;
        let temb = self.t_lin2.forward(g, &self.ps, lf, h)?;
        let cemb = lf.of(g, &self.ps, self.class_emb[class_id]);
        let cemb = g.reshape(cemb, &[1, self.cfg.emb_dim])?;
        Ok(g.add(temb, cemb)?)
    }

    /// ε̂ = ε_θ(z_t, t, c): [C,H,W] → [C,H,W]. Differentiable w.r.t. z.
    pub fn forward(
        &self,
        g: &Graph,
        lf: &mut Leafs,
        z: NodeId,
        t: usize,
        class_id: usize,
    ) -> Result<NodeId, DiffusionError> {
        self.check_t(t)?;
        self.check_class(class_id)?;
        let ps = &self.ps;
        let cond = self.cond_node(g, lf, t, class_id)?;
        let h0 = self.conv_in.forward(g, ps, lf, z)?;
        let h1 = self.block1.forward(g, ps, lf, h0, cond)?;
        let d = self.down.forward(g, ps, lf, h1)?;
        let h2 = self.block2.forward(g, ps, lf, d, cond)?;
        let u = self.up.forward(g, ps, lf, g.upsample2x(h2)?)?;
        let cat = g.concat(&[u, h1], 0)?;
        let h3 = self.merge.forward(g, ps, lf, cat)?;
        let h4 = self.block3.forward(g, ps, lf, h3, cond)?;
        Ok(self.conv_out.forward(g, ps, lf, g.silu(h4)?)?)
    }

    /// Classifier-free guided prediction. The endpoints are exact: s = 1
    /// runs only the conditional pass, s = 0 only the unconditional one.
    pub fn guided_predict(
        &self,
        g: &Graph,
        lf: &mut Leafs,
        z: NodeId,
        t: usize,
        class_id: usize,
        scale: f64,
    ) -> Result<NodeId, DiffusionError> {
        self.check_class(class_id)?;
        if scale == 1.0 {
            return self.forward(g, lf, z, t, class_id);
        }
        if scale == 0.0 {
            return self.forward(g, lf, z, t, self.null_class());
        }
        let e_c = self.forward(g, lf, z, t, class_id)?;
        let e_u = self.forward(g, lf, z, t, self.null_class())?;
        Ok(combine_cfg(g, e_u, e_c, scale)?)
    }

    pub fn weight_digest(&self) -> String {
        self.ps.digest()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.ps.to_checkpoint();
        ck.set_meta("arch", "toy-unet-v1");
        ck.set_meta("latent_channels", self.cfg.latent_channels);
        ck.set_meta("base_width", self.cfg.base_width);
        ck.set_meta("emb_dim", self.cfg.emb_dim);
        ck.set_meta("n_classes", self.cfg.n_classes);
        ck.set_meta("t_train", self.cfg.t_train);
        ck.set_meta("groups", self.cfg.groups);
        ck.set_meta("p_uncond", format!("{:?}", self.p_uncond));
        ck
    }

    pub fn save(&self, path: &Path) -> Result<(), DiffusionError> {
        self.to_checkpoint().save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DiffusionError> {
        let ck = Checkpoint::load(path)?;
        let cfg = DenoiserCfg {
            latent_channels: meta_parse(&ck, "latent_channels")?,
            base_width: meta_parse(&ck, "base_width")?,
            emb_dim: meta_parse(&ck, "emb_dim")?,
            n_classes: meta_parse(&ck, "n_classes")?,
            t_train: meta_parse(&ck, "t_train")?,
            groups: meta_parse(&ck, "groups")?,
        };
        let mut den = Self::new(cfg, 0);
        den.p_uncond = meta_parse(&ck, "p_uncond")?;
        den.ps.load_checkpoint(&ck)?;
        Ok(den)
    }
}

fn randn_scaled_emb(dim: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Tensor {
    tensor::rng::randn_scaled(&[dim], 0.2, rng)
}

/// ε̂ = ε_u + s·(ε_c − ε_u), as graph nodes.
pub fn combine_cfg(
    g: &Graph,
    e_u: NodeId,
    e_c: NodeId,
    scale: f64,
) -> Result<NodeId, tensor::TensorError> {
    let diff = g.sub(e_c, e_u)?;
    g.add(e_u, g.mul_scalar(diff, scale))
}

#[derive(Debug, Clone)]
pub struct DenoiserTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub p_uncond: f64,
    pub seed: u64,
}

impl Default for DenoiserTrainConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            batch_size: 8,
            lr: 2e-3,
            p_uncond: 0.1,
            seed: 0,
        }
    }
}

/// Train ε_θ on precomputed (normalized) latents with the standard noise
/// prediction objective ‖ε − ε_θ(z_t, t, c)‖². Conditions drop to the null
/// class with probability `p_uncond`. Returns per-step losses.
pub fn train_denoiser(
    den: &mut Denoiser,
    latents: &[Tensor],
    labels: &[usize],
    schedule: &NoiseSchedule,
    cfg: &DenoiserTrainConfig,
) -> Result<Vec<f64>, DiffusionError> {
    if latents.is_empty() || latents.len() != labels.len() {
        return Err(DiffusionError::EmptyDataset);
    }
    assert_eq!(schedule.t_train(), den.cfg.t_train, "schedule/model mismatch");
    den.p_uncond = cfg.p_uncond;
    let mut rng = stream(cfg.seed, "denoiser/train");
    let mut adam = Adam::new(cfg.lr);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut last_finite = f64::NAN;
    for step in 0..cfg.steps {
        let g = Graph::new();
        let mut lf = Leafs::new(&den.ps);
        let mut batch_losses = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let i = rng.gen_range(0..latents.len());
            let t = rng.gen_range(1..=schedule.t_train());
            let eps = randn(latents[i].shape(), &mut rng);
            let z_t = schedule.add_noise(&latents[i], t, &eps)?;
            let label = if rng.gen::<f64>() < cfg.p_uncond {
                den.null_class()
            } else {
                labels[i]
            };
            let zn = g.leaf(&z_t);
            let target = g.leaf(&eps);
            let pred = den.forward(&g, &mut lf, zn, t, label)?;
            batch_losses.push(g.mse(pred, target)?);
        }
        let loss = g.mul_scalar(g.sum_nodes(&batch_losses)?, 1.0 / cfg.batch_size as f64);
        let lv = g.value(loss).item();
        if !lv.is_finite() {
            return Err(DiffusionError::NanLoss { step, last_finite });
        }
        last_finite = lv;
        losses.push(lv);
        let grads = g.backward(loss)?;
        let gvec = collect_grads(&lf, &den.ps, &grads);
        adam.step_all(den.ps.tensors_mut(), &gvec);
        if step % 200 == 0 {
            log::debug!("denoiser step {step} loss {lv:.5}");
        }
    }
    Ok(losses)
}
