//! Evaluation classifier, trained on balanced resampled batches so its
//! judgment is independent of the generator's long-tailed training split.

use std::path::Path;

use synthdata::Dataset;
use tensor::checkpoint::Checkpoint;
use tensor::nn::{collect_grads, Conv2d, Leafs, Linear, Params};
use tensor::optim::Adam;
use tensor::rng::stream;
use tensor::{Graph, NodeId, Tensor};

use crate::augment::{augment, balanced_batch, class_index};
use crate::embedder::argmax;
use crate::ModelError;

pub struct Classifier {
    pub ps: Params,
    convs: [Conv2d; 3],
    head: Linear,
    pub image_size: usize,
    pub n_classes: usize,
}

impl Classifier {
    pub fn new(image_size: usize, n_classes: usize, seed: u64) -> Self {
        assert!(image_size % 8 == 0, "three stride-2 stages");
        let rng = &mut stream(seed, "classifier/init");
        let mut ps = Params::new();
        let convs = [
            Conv2d::init(&mut ps, "c0", 3, 16, 3, 2, 1, 1.4, rng),
            Conv2d::init(&mut ps, "c1", 16, 32, 3, 2, 1, 1.4, rng),
            Conv2d::init(&mut ps, "c2", 32, 32, 3, 2, 1, 1.4, rng),
        ];
        let flat = 32 * (image_size / 8) * (image_size / 8);
        let head = Linear::init(&mut ps, "head", flat, n_classes, 1.0, rng);
        Self {
            ps,
            convs,
            head,
            image_size,
            n_classes,
        }
    }

    /// Image [3,S,S] → logits [1,C]. Differentiable.
    pub fn logits_node(
        &self,
        g: &Graph,
        lf: &mut Leafs,
        x: NodeId,
    ) -> Result<NodeId, ModelError> {
        let mut h = x;
        for conv in &self.convs {
            h = g.silu(conv.forward(g, &self.ps, lf, h)?)?;
        }
        let flat = g.shape(h).iter().product::<usize>();
        let row = g.reshape(h, &[1, flat])?;
        Ok(self.head.forward(g, &self.ps, lf, row)?)
    }

    /// Cross-entropy of one (image, label) pair as a scalar node.
    pub fn loss_node(
        &self,
        g: &Graph,
        lf: &mut Leafs,
        x: NodeId,
        label: usize,
    ) -> Result<NodeId, ModelError> {
        if label >= self.n_classes {
            return Err(ModelError::UnknownClass {
                id: label,
                n_classes: self.n_classes,
            });
        }
        let logits = self.logits_node(g, lf, x)?;
        let probs = g.softmax(logits)?;
        let logp = g.ln(g.add_scalar(probs, 1e-12));
        let mut onehot = vec![0.0f64; self.n_classes];
        onehot[label] = -1.0;
        let sel = g.leaf(&Tensor::new(&[1, self.n_classes], onehot).expect("sized"));
        Ok(g.sum_all(g.mul(logp, sel)?))
    }

    /// Probability simplex over classes for one image.
    pub fn classify(&self, img: &Tensor) -> Result<Tensor, ModelError> {
        let g = Graph::new();
        let mut lf = Leafs::new(&self.ps);
        let x = g.leaf(img);
        let logits = self.logits_node(&g, &mut lf, x)?;
        let probs = g.softmax(logits)?;
        Ok(g.value(probs).reshaped(&[self.n_classes]).expect("row"))
    }

    pub fn predict(&self, img: &Tensor) -> Result<usize, ModelError> {
        Ok(argmax(self.classify(img)?.data()))
    }

    pub fn weight_digest(&self) -> String {
        self.ps.digest()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.ps.to_checkpoint();
        ck.set_meta("arch", "toy-classifier-v1");
        ck.set_meta("image_size", self.image_size);
        ck.set_meta("n_classes", self.n_classes);
        ck
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        self.to_checkpoint().save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let ck = Checkpoint::load(path)?;
        let image_size = meta_usize(&ck, "image_size")?;
        let n_classes = meta_usize(&ck, "n_classes")?;
        let mut c = Self::new(image_size, n_classes, 0);
        c.ps.load_checkpoint(&ck)?;
        Ok(c)
    }

    /// Per-class accuracy over a labeled set.
    pub fn per_class_accuracy(&self, ds: &Dataset) -> Result<Vec<f64>, ModelError> {
        let mut correct = vec![0usize; self.n_classes];
        let mut totals = vec![0usize; self.n_classes];
        for (img, &y) in ds.images.iter().zip(&ds.labels) {
            totals[y] += 1;
            if self.predict(img)? == y {
                correct[y] += 1;
            }
        }
        Ok((0..self.n_classes)
            .map(|c| {
                if totals[c] == 0 {
                    0.0
                } else {
                    correct[c] as f64 / totals[c] as f64
                }
            })
            .collect())
    }

    /// Mean of per-class accuracies (balanced accuracy).
    pub fn balanced_accuracy(&self, ds: &Dataset) -> Result<f64, ModelError> {
        let per = self.per_class_accuracy(ds)?;
        let present: Vec<f64> = per
            .iter()
            .enumerate()
            .filter(|(c, _)| ds.labels.iter().any(|&y| y == *c))
            .map(|(_, &a)| a)
            .collect();
        Ok(present.iter().sum::<f64>() / present.len() as f64)
    }
}

fn meta_usize(ck: &Checkpoint, key: &str) -> Result<usize, ModelError> {
    ck.meta
        .get(key)
        .ok_or_else(|| ModelError::Invalid(format!("checkpoint missing meta key {key:?}")))?
        .parse()
        .map_err(|_| ModelError::Invalid(format!("checkpoint meta {key:?} unparsable")))
}

#[derive(Debug, Clone)]
pub struct ClassifierTrainConfig {
    pub steps: usize,
    /// Images per class per batch (balanced resampling).
    pub per_class: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            steps: 400,
            per_class: 2,
            lr: 2e-3,
            seed: 0,
        }
    }
}

/// Balanced cross-entropy training with flip/jitter augmentation.
pub fn train_classifier(
    clf: &mut Classifier,
    ds: &Dataset,
    cfg: &ClassifierTrainConfig,
) -> Result<Vec<f64>, ModelError> {
    if ds.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let by_class = class_index(ds, clf.n_classes);
    let b = clf.n_classes * cfg.per_class;
    let mut rng = stream(cfg.seed, "classifier/train");
    let mut adam = Adam::new(cfg.lr);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut last_finite = f64::NAN;
    for step in 0..cfg.steps {
        let batch = balanced_batch(&by_class, cfg.per_class, &mut rng);
        let g = Graph::new();
        let mut lf = Leafs::new(&clf.ps);
        let mut batch_losses = Vec::with_capacity(b);
        for &i in &batch {
            let img = augment(&ds.images[i], &mut rng);
            let x = g.leaf(&img);
            batch_losses.push(clf.loss_node(&g, &mut lf, x, ds.labels[i])?);
        }
        let loss = g.mul_scalar(g.sum_nodes(&batch_losses)?, 1.0 / b as f64);
        let lv = g.value(loss).item();
        if !lv.is_finite() {
            return Err(ModelError::NanLoss { step, last_finite });
        }
        last_finite = lv;
        losses.push(lv);
        let grads = g.backward(loss)?;
        let gvec = collect_grads(&lf, &clf.ps, &grads);
        adam.step_all(clf.ps.tensors_mut(), &gvec);
        if step % 100 == 0 {
            log::debug!("classifier step {step} loss {lv:.5}");
        }
    }
    Ok(losses)
}
