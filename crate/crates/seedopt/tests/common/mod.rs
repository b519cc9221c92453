use diffusion::{Autoencoder, Denoiser, DenoiserCfg, NoiseSchedule};
use models::Embedder;
use seedopt::{FrozenStack, ReferenceSet};
use synthdata::{render_image, ShapeFamily};
use tensor::rng::stream;
use tensor::Tensor;

pub const SIZE: usize = 16;

pub struct TinyStack {
    pub ae: Autoencoder,
    pub den: Denoiser,
    pub schedule: NoiseSchedule,
    pub emb: Embedder,
}

impl TinyStack {
    pub fn new() -> Self {
        let cfg = DenoiserCfg {
            latent_channels: 4,
            base_width: 8,
            emb_dim: 16,
            n_classes: 3,
            t_train: 50,
            groups: 2,
        };
        Self {
            ae: Autoencoder::new(SIZE, 1),
            den: Denoiser::new(cfg, 2),
            schedule: NoiseSchedule::linear(50, 1e-4, 2e-2),
            emb: Embedder::new(SIZE, 8, 3),
        }
    }

    pub fn frozen(&self) -> FrozenStack<'_> {
        FrozenStack {
            ae: &self.ae,
            den: &self.den,
            schedule: &self.schedule,
            emb: &self.emb,
        }
    }
}

pub fn reference_images(class: usize, k: usize) -> Vec<Tensor> {
    (0..k)
        .map(|i| {
            let rng = &mut stream(900 + i as u64, "seedopt-test/ref");
            render_image(ShapeFamily::ALL[class], class, 12, SIZE, rng)
        })
        .collect()
}

pub fn reference_set(stack: &TinyStack, class: usize, k: usize) -> ReferenceSet {
    ReferenceSet::new(reference_images(class, k), class, &stack.ae, &stack.emb).unwrap()
}
