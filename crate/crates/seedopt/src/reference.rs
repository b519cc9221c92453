//! Reference sets: the handful of real images the seed is optimized against,
//! with their encoder latents and embedding centroid cached up front.

use diffusion::Autoencoder;
use models::Embedder;
use tensor::Tensor;

use crate::SeedOptError;

/// k reference images of one target class plus cached latents zⁱ = ℰ(Iⁱ),
/// per-image embeddings, and the embedding centroid μ_v.
///
/// Fields are private and set only by the constructor, so the caches can
/// never go stale relative to the images.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    images: Vec<Tensor>,
    target_class: usize,
    latents: Vec<Tensor>,
    embeds: Vec<Tensor>,
    centroid: Tensor,
}

impl ReferenceSet {
    pub fn new(
        images: Vec<Tensor>,
        target_class: usize,
        ae: &Autoencoder,
        embedder: &Embedder,
    ) -> Result<Self, SeedOptError> {
        if images.is_empty() {
            return Err(SeedOptError::EmptyReferences);
        }
        let mut latents = Vec::with_capacity(images.len());
        let mut embeds = Vec::with_capacity(images.len());
        for img in &images {
            latents.push(ae.encode(img)?);
            embeds.push(embedder.embed(img)?);
        }
        let centroid = mean_of(&embeds);
        Ok(Self {
            images,
            target_class,
            latents,
            embeds,
            centroid,
        })
    }

    /// Bootstrap subset: pick the given image indices (duplicates allowed),
    /// reusing the cached latents/embeddings and re-averaging the centroid.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, SeedOptError> {
        if indices.is_empty() {
            return Err(SeedOptError::EmptyReferences);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.k()) {
            return Err(SeedOptError::DimensionMismatch(format!(
                "subset index {bad} out of range for k = {}",
                self.k()
            )));
        }
        let pick = |v: &[Tensor]| indices.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
        let embeds = pick(&self.embeds);
        let centroid = mean_of(&embeds);
        Ok(Self {
            images: pick(&self.images),
            target_class: self.target_class,
            latents: pick(&self.latents),
            embeds,
            centroid,
        })
    }

    pub fn k(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    pub fn target_class(&self) -> usize {
        self.target_class
    }

    pub fn latents(&self) -> &[Tensor] {
        &self.latents
    }

    pub fn embeds(&self) -> &[Tensor] {
        &self.embeds
    }

    /// μ_v — the plain mean of the reference embeddings (not re-normalized).
    pub fn centroid(&self) -> &Tensor {
        &self.centroid
    }
}

fn mean_of(vecs: &[Tensor]) -> Tensor {
    let dim = vecs[0].len();
    let mut acc = vec![0.0f64; dim];
    for v in vecs {
        for (a, &b) in acc.iter_mut().zip(v.data()) {
            *a += b;
        }
    }
    let n = vecs.len() as f64;
    Tensor::new(vecs[0].shape(), acc.into_iter().map(|x| x / n).collect()).expect("sized")
}
