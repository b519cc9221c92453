//! Semantic embedder: images → unit-norm vectors, trained with a supervised
//! contrastive objective on balanced batches so the semantic space treats
//! head and tail classes alike.

use std::path::Path;

use synthdata::Dataset;
use tensor::checkpoint::Checkpoint;
use tensor::nn::{collect_grads, Conv2d, Leafs, Linear, Params};
use tensor::optim::Adam;
use tensor::rng::stream;
use tensor::{Graph, NodeId, Tensor};

use crate::augment::{augment, balanced_batch, class_index};
use crate::ModelError;

pub struct Embedder {
    pub ps: Params,
    convs: [Conv2d; 3],
    proj: Linear,
    pub image_size: usize,
    pub dim: usize,
}

impl Embedder {
    pub fn new(image_size: usize, dim: usize, seed: u64) -> Self {
        assert!(image_size % 8 == 0, "three stride-2 stages");
        let rng = &mut stream(seed, "embedder/init");
        let mut ps = Params::new();
        let convs = [
            Conv2d::init(&mut ps, "c0", 3, 12, 3, 2, 1, 1.4, rng),
            Conv2d::init(&mut ps, "c1", 12, 24, 3, 2, 1, 1.4, rng),
            Conv2d::init(&mut ps, "c2", 24, 24, 3, 2, 1, 1.4, rng),
        ];
        let flat = 24 * (image_size / 8) * (image_size / 8);
        let proj = Linear::init(&mut ps, "proj", flat, dim, 1.0, rng);
        Self {
            ps,
            convs,
            proj,
            image_size,
            dim,
        }
    }

    /// Image [3,S,S] → unit-norm [D] node. Differentiable.
    pub fn embed_node(
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
        let v = self.proj.forward(g, &self.ps, lf, row)?;
        let v = g.reshape(v, &[self.dim])?;
        Ok(g.l2_normalize(v)?)
    }

    /// Detached convenience embedding.
    pub fn embed(&self, img: &Tensor) -> Result<Tensor, ModelError> {
        let g = Graph::new();
        let mut lf = Leafs::new(&self.ps);
        let x = g.leaf(img);
        let v = self.embed_node(&g, &mut lf, x)?;
        Ok(g.value(v))
    }

    pub fn weight_digest(&self) -> String {
        self.ps.digest()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.ps.to_checkpoint();
        ck.set_meta("arch", "toy-embedder-v1");
        ck.set_meta("image_size", self.image_size);
        ck.set_meta("dim", self.dim);
        ck
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        self.to_checkpoint().save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let ck = Checkpoint::load(path)?;
        let image_size = meta_usize(&ck, "image_size")?;
        let dim = meta_usize(&ck, "dim")?;
        let mut e = Self::new(image_size, dim, 0);
        e.ps.load_checkpoint(&ck)?;
        Ok(e)
    }
}

fn meta_usize(ck: &Checkpoint, key: &str) -> Result<usize, ModelError> {
    ck.meta
        .get(key)
        .ok_or_else(|| ModelError::Invalid(format!("checkpoint missing meta key {key:?}")))?
        .parse()
        .map_err(|_| ModelError::Invalid(format!("checkpoint meta {key:?} unparsable")))
}

/// Arithmetic mean of the embeddings — deliberately NOT re-normalized.
pub fn centroid(embedder: &Embedder, images: &[Tensor]) -> Result<Tensor, ModelError> {
    if images.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut acc = vec![0.0f64; embedder.dim];
    for img in images {
        let v = embedder.embed(img)?;
        for (a, &b) in acc.iter_mut().zip(v.data().iter()) {
            *a += b;
        }
    }
    let n = images.len() as f64;
    Ok(Tensor::new(&[embedder.dim], acc.into_iter().map(|v| v / n).collect())
        .expect("sized buffer"))
}

/// Class id → centroid of its member embeddings.
#[derive(Debug, Clone)]
pub struct CentroidTable {
    pub vecs: Vec<Tensor>,
}

impl CentroidTable {
    pub fn n_classes(&self) -> usize {
        self.vecs.len()
    }

    pub fn get(&self, class: usize) -> Result<&Tensor, ModelError> {
        self.vecs.get(class).ok_or(ModelError::UnknownClass {
            id: class,
            n_classes: self.vecs.len(),
        })
    }
}

/// Per-class centroids over a labeled dataset.
pub fn build_centroid_table(
    embedder: &Embedder,
    ds: &Dataset,
    n_classes: usize,
) -> Result<CentroidTable, ModelError> {
    let mut vecs = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let imgs: Vec<Tensor> = ds
            .of_class(c)
            .into_iter()
            .map(|i| ds.images[i].clone())
            .collect();
        vecs.push(centroid(embedder, &imgs)?);
    }
    Ok(CentroidTable { vecs })
}

#[derive(Debug, Clone)]
pub struct EmbedderTrainConfig {
    pub steps: usize,
    /// Images per class per batch (batch size = n_classes · per_class).
    pub per_class: usize,
    pub lr: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for EmbedderTrainConfig {
    fn default() -> Self {
        Self {
            steps: 400,
            per_class: 2,
            lr: 2e-3,
            temperature: 0.2,
            seed: 0,
        }
    }
}

/// Supervised contrastive loss over a batch of unit-norm rows `v` [B,D]:
/// logits V·Vᵀ/τ with the diagonal masked by a large negative constant, and
/// loss −(1/B)·Σᵢ (1/|P(i)|)·Σ_{p∈P(i)} log softmax(logits)ᵢₚ where P(i) are
/// the other same-class rows of anchor i. Every anchor needs ≥1 positive.
pub fn supcon_loss_node(
    g: &Graph,
    v: NodeId,
    labels: &[usize],
    temperature: f64,
) -> Result<NodeId, ModelError> {
    let b = labels.len();
    if b == 0 {
        return Err(ModelError::EmptyInput);
    }
    if temperature <= 0.0 {
        return Err(ModelError::Invalid("temperature must be positive".into()));
    }
    let mut diag = vec![0.0f64; b * b];
    let mut pos = vec![0.0f64; b * b];
    for i in 0..b {
        diag[i * b + i] = -1e9;
        let n_pos = labels.iter().enumerate().filter(|&(j, &l)| j != i && l == labels[i]).count();
        if n_pos == 0 {
            return Err(ModelError::Invalid(format!(
                "anchor {i} (class {}) has no positive in the batch",
                labels[i]
            )));
        }
        for j in 0..b {
            if i != j && labels[i] == labels[j] {
                pos[i * b + j] = 1.0 / n_pos as f64;
            }
        }
    }
    let diag = Tensor::new(&[b, b], diag).expect("sized");
    let pos = Tensor::new(&[b, b], pos).expect("sized");
    let ones = Tensor::full(&[b, 1], 1.0);

    let logits = g.mul_scalar(g.matmul(v, g.transpose2(v)?)?, 1.0 / temperature);
    let masked = g.add(logits, g.leaf(&diag))?;
    // row-wise log-sum-exp; unit-norm rows bound |logits| ≤ 1/τ, no
    // max-shift needed, and the masked diagonal underflows to exp → 0
    let lse = g.ln(g.matmul(g.exp(masked), g.leaf(&ones))?);
    let log_probs = g.sub(masked, lse)?; // [B,B] − [B,1] broadcast
    let weighted = g.mul(log_probs, g.leaf(&pos))?;
    Ok(g.mul_scalar(g.sum_all(weighted), -1.0 / b as f64))
}

/// Supervised contrastive training on balanced augmented batches.
pub fn train_embedder(
    emb: &mut Embedder,
    ds: &Dataset,
    n_classes: usize,
    cfg: &EmbedderTrainConfig,
) -> Result<Vec<f64>, ModelError> {
    if ds.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    assert!(cfg.per_class >= 2, "contrastive anchors need a positive");
    let by_class = class_index(ds, n_classes);
    let b = n_classes * cfg.per_class;
    let mut rng = stream(cfg.seed, "embedder/train");
    let mut adam = Adam::new(cfg.lr);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut last_finite = f64::NAN;

    let labels: Vec<usize> = (0..n_classes)
        .flat_map(|c| std::iter::repeat(c).take(cfg.per_class))
        .collect();

    for step in 0..cfg.steps {
        let batch = balanced_batch(&by_class, cfg.per_class, &mut rng);
        let g = Graph::new();
        let mut lf = Leafs::new(&emb.ps);
        let rows: Vec<NodeId> = batch
            .iter()
            .map(|&i| {
                let img = augment(&ds.images[i], &mut rng);
                let x = g.leaf(&img);
                let v = emb.embed_node(&g, &mut lf, x)?;
                Ok(g.reshape(v, &[1, emb.dim])?)
            })
            .collect::<Result<_, ModelError>>()?;
        let v = g.concat(&rows, 0)?;
        let loss = supcon_loss_node(&g, v, &labels, cfg.temperature)?;
        debug_assert_eq!(b, batch.len());

        let lv = g.value(loss).item();
        if !lv.is_finite() {
            return Err(ModelError::NanLoss { step, last_finite });
        }
        last_finite = lv;
        losses.push(lv);
        let grads = g.backward(loss)?;
        let gvec = collect_grads(&lf, &emb.ps, &grads);
        adam.step_all(emb.ps.tensors_mut(), &gvec);
        if step % 100 == 0 {
            log::debug!("embedder step {step} loss {lv:.5}");
        }
    }
    Ok(losses)
}

/// Multinomial logistic probe on frozen embeddings; returns balanced test
/// accuracy. The probe itself trains full-batch with Adam.
pub fn linear_probe(
    train_emb: &[Tensor],
    train_labels: &[usize],
    test_emb: &[Tensor],
    test_labels: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    if train_emb.is_empty() || test_emb.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let dim = train_emb[0].len();
    let n = train_emb.len();
    let x = stack_rows(train_emb)?;
    let mut onehot = vec![0.0f64; n * n_classes];
    for (i, &y) in train_labels.iter().enumerate() {
        onehot[i * n_classes + y] = 1.0;
    }
    let y_t = Tensor::new(&[n, n_classes], onehot).expect("sized");

    let mut ps = Params::new();
    let rng = &mut stream(seed, "probe/init");
    let lin = Linear::init(&mut ps, "probe", dim, n_classes, 1.0, rng);
    let mut adam = Adam::new(0.05);
    for _ in 0..300 {
        let g = Graph::new();
        let mut lf = Leafs::new(&ps);
        let xn = g.leaf(&x);
        let logits = lin.forward(&g, &ps, &mut lf, xn)?;
        let probs = g.softmax(logits)?;
        let logp = g.ln(g.add_scalar(probs, 1e-12));
        let loss = g.mul_scalar(g.sum_all(g.mul(logp, g.leaf(&y_t))?), -1.0 / n as f64);
        let grads = g.backward(loss)?;
        let gvec = collect_grads(&lf, &ps, &grads);
        adam.step_all(ps.tensors_mut(), &gvec);
    }

    // balanced accuracy: mean of per-class accuracies
    let mut correct = vec![0usize; n_classes];
    let mut totals = vec![0usize; n_classes];
    let g = Graph::new();
    let mut lf = Leafs::new(&ps);
    for (v, &y) in test_emb.iter().zip(test_labels) {
        let xn = g.leaf(&v.reshaped(&[1, dim]).expect("row"));
        let logits = lin.forward(&g, &ps, &mut lf, xn)?;
        let row = g.value(logits);
        let pred = argmax(row.data());
        totals[y] += 1;
        if pred == y {
            correct[y] += 1;
        }
    }
    let acc: f64 = (0..n_classes)
        .filter(|&c| totals[c] > 0)
        .map(|c| correct[c] as f64 / totals[c] as f64)
        .sum::<f64>()
        / (0..n_classes).filter(|&c| totals[c] > 0).count() as f64;
    Ok(acc)
}

pub(crate) fn stack_rows(rows: &[Tensor]) -> Result<Tensor, ModelError> {
    let dim = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        if r.len() != dim {
            return Err(ModelError::Invalid("ragged embedding rows".into()));
        }
        data.extend_from_slice(r.data());
    }
    Ok(Tensor::new(&[rows.len(), dim], data).expect("sized"))
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
