//! Convolutional autoencoder with deterministic latents and a recorded
//! latent normalization (mean/std) so downstream diffusion sees unit-scale
//! codes.

use std::path::Path;

use rand::Rng;
use tensor::checkpoint::Checkpoint;
use tensor::nn::{collect_grads, Conv2d, Leafs, Params};
use tensor::optim::Adam;
use tensor::rng::stream;
use tensor::{Graph, NodeId, Tensor};

use crate::DiffusionError;

pub const LATENT_CHANNELS: usize = 4;

pub struct Autoencoder {
    pub ps: Params,
    enc: [Conv2d; 3],
    dec: [Conv2d; 4],
    pub image_size: usize,
    pub latent_mean: f64,
    pub latent_std: f64,
}

impl Autoencoder {
    pub fn new(image_size: usize, seed: u64) -> Self {
        assert!(image_size % 4 == 0, "two stride-2 stages need size % 4 == 0");
        let mut ps = Params::new();
        let rng = &mut stream(seed, "ae/init");
        let enc = [
            Conv2d::init(&mut ps, "enc0", 3, 12, 3, 2, 1, 1.0, rng),
            Conv2d::init(&mut ps, "enc1", 12, 24, 3, 2, 1, 1.0, rng),
            Conv2d::init(&mut ps, "enc2", 24, LATENT_CHANNELS, 3, 1, 1, 1.0, rng),
        ];
        let dec = [
            Conv2d::init(&mut ps, "dec0", LATENT_CHANNELS, 24, 3, 1, 1, 1.0, rng),
            Conv2d::init(&mut ps, "dec1", 24, 12, 3, 1, 1, 1.0, rng),
            Conv2d::init(&mut ps, "dec2", 12, 12, 3, 1, 1, 1.0, rng),
            Conv2d::init(&mut ps, "dec3", 12, 3, 3, 1, 1, 1.0, rng),
        ];
        Self {
            ps,
            enc,
            dec,
            image_size,
            latent_mean: 0.0,
            latent_std: 1.0,
        }
    }

    pub fn latent_shape(&self) -> [usize; 3] {
        let s = self.image_size / 4;
        [LATENT_CHANNELS, s, s]
    }

    /// ℰ as graph nodes: image [3,S,S] → normalized latent [4,S/4,S/4].
    pub fn encode_node(
        &self,
        g: &Graph,
        lf: &mut Leafs,
        x: NodeId,
    ) -> Result<NodeId, DiffusionError> {
        let h = g.silu(self.enc[0].forward(g, &self.ps, lf, x)?)?;
        let h = g.silu(self.enc[1].forward(g, &self.ps, lf, h)?)?;
        let z = self.enc[2].forward(g, &self.ps, lf, h)?;
        // (z − m) / s, folded into one affine
        let inv = 1.0 / self.latent_std;
        Ok(g.add_scalar(g.mul_scalar(z, inv), -self.latent_mean * inv))
    }

    /// 𝒟 as graph nodes: normalized latent → image in [0,1] (sigmoid).
    pub fn decode_node(
        &self,
        g: &Graph,
        lf: &mut Leafs,
        z: NodeId,
    ) -> Result<NodeId, DiffusionError> {
        let z = g.add_scalar(g.mul_scalar(z, self.latent_std), self.latent_mean);
        let h = g.silu(self.dec[0].forward(g, &self.ps, lf, z)?)?;
        let h = g.upsample2x(h)?;
        let h = g.silu(self.dec[1].forward(g, &self.ps, lf, h)?)?;
        let h = g.upsample2x(h)?;
        let h = g.silu(self.dec[2].forward(g, &self.ps, lf, h)?)?;
        Ok(g.sigmoid(self.dec[3].forward(g, &self.ps, lf, h)?))
    }

    /// Detached convenience: encode one image to a plain tensor.
    pub fn encode(&self, img: &Tensor) -> Result<Tensor, DiffusionError> {
        let g = Graph::new();
        let mut lf = Leafs::new(&self.ps);
        let x = g.leaf(img);
        let z = self.encode_node(&g, &mut lf, x)?;
        Ok(g.value(z))
    }

    /// Detached convenience: decode one latent to a plain image tensor.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor, DiffusionError> {
        let g = Graph::new();
        let mut lf = Leafs::new(&self.ps);
        let zn = g.leaf(z);
        let x = self.decode_node(&g, &mut lf, zn)?;
        Ok(g.value(x))
    }

    pub fn weight_digest(&self) -> String {
        self.ps.digest()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.ps.to_checkpoint();
        ck.set_meta("arch", "toy-ae-v1");
        ck.set_meta("image_size", self.image_size);
        ck.set_meta("latent_mean", format!("{:?}", self.latent_mean));
        ck.set_meta("latent_std", format!("{:?}", self.latent_std));
        ck
    }

    pub fn save(&self, path: &Path) -> Result<(), DiffusionError> {
        self.to_checkpoint().save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DiffusionError> {
        let ck = Checkpoint::load(path)?;
        let image_size = meta_parse(&ck, "image_size")?;
        let mut ae = Self::new(image_size, 0);
        ae.latent_mean = meta_parse(&ck, "latent_mean")?;
        ae.latent_std = meta_parse(&ck, "latent_std")?;
        ae.ps.load_checkpoint(&ck)?;
        Ok(ae)
    }
}

pub(crate) fn meta_parse<T: std::str::FromStr>(
    ck: &Checkpoint,
    key: &str,
) -> Result<T, DiffusionError> {
    ck.meta
        .get(key)
        .ok_or_else(|| DiffusionError::Invalid(format!("checkpoint missing meta key {key:?}")))?
        .parse()
        .map_err(|_| DiffusionError::Invalid(format!("checkpoint meta {key:?} unparsable")))
}

#[derive(Debug, Clone)]
pub struct AeTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self {
            steps: 600,
            batch_size: 8,
            lr: 2e-3,
            seed: 0,
        }
    }
}

/// Train with plain reconstruction MSE, then fit the latent normalization
/// over the training images. Returns per-step losses.
pub fn train_autoencoder(
    ae: &mut Autoencoder,
    images: &[Tensor],
    cfg: &AeTrainConfig,
) -> Result<Vec<f64>, DiffusionError> {
    if images.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    let mut rng = stream(cfg.seed, "ae/train");
    let mut adam = Adam::new(cfg.lr);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut last_finite = f64::NAN;
    for step in 0..cfg.steps {
        let g = Graph::new();
        let mut lf = Leafs::new(&ae.ps);
        let mut batch_losses = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let img = &images[rng.gen_range(0..images.len())];
            let x = g.leaf(img);
            let z = ae.encode_node(&g, &mut lf, x)?;
            let y = ae.decode_node(&g, &mut lf, z)?;
            batch_losses.push(g.mse(y, x)?);
        }
        let loss = g.mul_scalar(g.sum_nodes(&batch_losses)?, 1.0 / cfg.batch_size as f64);
        let lv = g.value(loss).item();
        if !lv.is_finite() {
            return Err(DiffusionError::NanLoss { step, last_finite });
        }
        last_finite = lv;
        losses.push(lv);
        let grads = g.backward(loss)?;
        let gvec = collect_grads(&lf, &ae.ps, &grads);
        adam.step_all(ae.ps.tensors_mut(), &gvec);
    }

    // fit latent stats so diffusion trains on ~unit-scale codes
    ae.latent_mean = 0.0;
    ae.latent_std = 1.0;
    let (mut sum, mut sq, mut n) = (0.0f64, 0.0f64, 0usize);
    for img in images {
        let z = ae.encode(img)?;
        for &v in z.data().iter() {
            sum += v;
            sq += v * v;
            n += 1;
        }
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(1e-12);
    ae.latent_mean = mean;
    ae.latent_std = var.sqrt();
    Ok(losses)
}
