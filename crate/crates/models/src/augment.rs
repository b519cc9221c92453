//! Label-preserving training augmentation and balanced batch sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use synthdata::{color_jitter, flip_h, Dataset};
use tensor::Tensor;

/// Random horizontal flip (p = 0.5) plus mild channel jitter. All dataset
/// shape families are closed under flips, so labels survive.
pub fn augment(img: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
    let flipped = if rng.gen_bool(0.5) { flip_h(img) } else { img.clone() };
    color_jitter(&flipped, 0.1, rng)
}

/// Per-class index lists, computed once per training run.
pub fn class_index(ds: &Dataset, n_classes: usize) -> Vec<Vec<usize>> {
    (0..n_classes).map(|c| ds.of_class(c)).collect()
}

/// `per_class` indices from every class, sampled with replacement — a
/// balanced batch regardless of how long-tailed the dataset is.
pub fn balanced_batch(
    by_class: &[Vec<usize>],
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut batch = Vec::with_capacity(by_class.len() * per_class);
    for members in by_class {
        assert!(!members.is_empty(), "class without training images");
        for _ in 0..per_class {
            batch.push(members[rng.gen_range(0..members.len())]);
        }
    }
    batch
}
