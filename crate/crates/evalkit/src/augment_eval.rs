//! Mix-training: fine-tune a fresh classifier on few-shot real data plus
//! generated images, one batch loss per source, summed 1:1.

use models::augment::{augment, balanced_batch, class_index};
use models::Classifier;
use synthdata::Dataset;
use tensor::nn::{collect_grads, Leafs};
use tensor::optim::Adam;
use tensor::rng::stream;
use tensor::Graph;

use crate::EvalError;

#[derive(Debug, Clone)]
pub struct MixConfig {
    pub steps: usize,
    /// Images per class per source batch.
    pub per_class: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            per_class: 1,
            lr: 2e-3,
            seed: 0,
        }
    }
}

/// Train a fresh classifier on real + generated batches.
///
/// Per step, the cross-entropy of one balanced real batch and one balanced
/// generated batch are each averaged within their batch and then summed with
/// equal weight. An empty generated set degrades exactly to real-only
/// training: the two sources consume independent RNG streams
/// (`"mix/real"` and `"mix/synth"` under `cfg.seed`), so skipping the
/// generated batch leaves the real draws untouched.
pub fn mix_train(
    real_train: &Dataset,
    generated: &Dataset,
    n_classes: usize,
    cfg: &MixConfig,
) -> Result<(Classifier, Vec<f64>), EvalError> {
    if real_train.is_empty() {
        return Err(EvalError::Invalid("empty real training set".into()));
    }
    let image_size = real_train.images[0].shape()[1];
    let real_by_class = class_index(real_train, n_classes);
    if let Some(c) = (0..n_classes).find(|&c| real_by_class[c].is_empty()) {
        return Err(EvalError::Invalid(format!(
            "real training set has no images of class {c}"
        )));
    }
    let synth_by_class = (!generated.is_empty()).then(|| {
        let idx = class_index(generated, n_classes);
        (0..n_classes)
            .find(|&c| idx[c].is_empty())
            .map_or(Ok(idx), |c| {
                Err(EvalError::Invalid(format!(
                    "generated set has no images of class {c}"
                )))
            })
    });
    let synth_by_class = synth_by_class.transpose()?;

    let mut clf = Classifier::new(image_size, n_classes, cfg.seed);
    let mut rng_real = stream(cfg.seed, "mix/real");
    let mut rng_synth = stream(cfg.seed, "mix/synth");
    let mut adam = Adam::new(cfg.lr);
    let mut losses = Vec::with_capacity(cfg.steps);

    for _ in 0..cfg.steps {
        let g = Graph::new();
        let mut lf = Leafs::new(&clf.ps);

        let real_idx = balanced_batch(&real_by_class, cfg.per_class, &mut rng_real);
        let mut real_terms = Vec::with_capacity(real_idx.len());
        for &i in &real_idx {
            let img = augment(&real_train.images[i], &mut rng_real);
            let x = g.leaf(&img);
            real_terms.push(clf.loss_node(&g, &mut lf, x, real_train.labels[i])?);
        }
        let mut total = g.mul_scalar(
            g.sum_nodes(&real_terms)?,
            1.0 / real_terms.len() as f64,
        );

        if let Some(by_class) = &synth_by_class {
            let synth_idx = balanced_batch(by_class, cfg.per_class, &mut rng_synth);
            let mut synth_terms = Vec::with_capacity(synth_idx.len());
            for &i in &synth_idx {
                let img = augment(&generated.images[i], &mut rng_synth);
                let x = g.leaf(&img);
                synth_terms.push(clf.loss_node(&g, &mut lf, x, generated.labels[i])?);
            }
            let synth_loss = g.mul_scalar(
                g.sum_nodes(&synth_terms)?,
                1.0 / synth_terms.len() as f64,
            );
            total = g.add(total, synth_loss)?;
        }

        losses.push(g.value(total).item());
        let grads = g.backward(total)?;
        let gvec = collect_grads(&lf, &clf.ps, &grads);
        adam.step_all(clf.ps.tensors_mut(), &gvec);
    }
    Ok((clf, losses))
}

/// Mix-train and report balanced accuracy on the held-out test set.
pub fn augmentation_eval(
    real_train: &Dataset,
    generated: &Dataset,
    test: &Dataset,
    n_classes: usize,
    cfg: &MixConfig,
) -> Result<f64, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Invalid("empty test set".into()));
    }
    let (clf, _) = mix_train(real_train, generated, n_classes, cfg)?;
    Ok(clf.balanced_accuracy(test)?)
}
