use approx::assert_abs_diff_eq;
use models::{
    build_centroid_table, centroid, linear_probe, supcon_loss_node, train_embedder, Embedder,
    EmbedderTrainConfig, ModelError,
};
use synthdata::{render_image, Dataset, DatasetSpec, ShapeFamily};
use tensor::rng::stream;
use tensor::{Graph, Tensor};

fn tiny_spec() -> DatasetSpec {
    DatasetSpec {
        n_classes: 3,
        head_count: 12,
        decay: 0.8,
        image_size: 16,
        test_per_class: 4,
        seed: 7,
    }
}

fn random_image(size: usize, seed: u64) -> Tensor {
    let rng = &mut stream(seed, "test/img");
    render_image(ShapeFamily::ALL[(seed % 12) as usize], seed as usize % 12, 12, size, rng)
}

#[test]
fn embeddings_are_unit_norm() {
    let emb = Embedder::new(16, 8, 3);
    for s in 0..5u64 {
        let v = emb.embed(&random_image(16, s)).unwrap();
        assert_eq!(v.shape(), &[8]);
        let norm: f64 = v.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-9);
    }
}

#[test]
fn embedding_is_deterministic() {
    let emb = Embedder::new(16, 8, 3);
    let img = random_image(16, 11);
    let a = emb.embed(&img).unwrap();
    let b = emb.embed(&img).unwrap();
    assert_eq!(a.data(), b.data());
}

/// Brute-force scalar oracle for the supervised contrastive loss.
fn supcon_oracle(rows: &[Vec<f64>], labels: &[usize], tau: f64) -> f64 {
    let b = rows.len();
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    let mut total = 0.0;
    for i in 0..b {
        let pos: Vec<usize> = (0..b).filter(|&j| j != i && labels[j] == labels[i]).collect();
        assert!(!pos.is_empty());
        // denominator: sum over all j != i of exp(sim_ij / tau), with the
        // diagonal included via its -1e9 mask exactly as the graph does it
        let mut denom = 0.0;
        for j in 0..b {
            let mut logit = dot(&rows[i], &rows[j]) / tau;
            if j == i {
                logit += -1e9;
            }
            denom += logit.exp();
        }
        let mut anchor = 0.0;
        for &p in &pos {
            let logit = dot(&rows[i], &rows[p]) / tau;
            anchor += logit - denom.ln();
        }
        total += anchor / pos.len() as f64;
    }
    -total / b as f64
}

#[test]
fn supcon_loss_matches_bruteforce_oracle() {
    // six unit-norm rows in 3-space, two classes interleaved
    let raw = [
        [0.9, 0.1, 0.3],
        [-0.2, 0.8, 0.1],
        [0.7, -0.3, 0.2],
        [0.05, 0.9, -0.3],
        [0.8, 0.2, -0.4],
        [-0.1, 0.7, 0.4],
    ];
    let labels = [0usize, 1, 0, 1, 0, 1];
    let rows: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| {
            let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            r.iter().map(|x| x / n).collect()
        })
        .collect();
    for tau in [0.1, 0.2, 1.0] {
        let expect = supcon_oracle(&rows, &labels, tau);
        let g = Graph::new();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let v = g.leaf(&Tensor::new(&[6, 3], flat).unwrap());
        let loss = supcon_loss_node(&g, v, &labels, tau).unwrap();
        assert_abs_diff_eq!(g.value(loss).item(), expect, epsilon = 1e-12);
    }
}

#[test]
fn supcon_identical_positives_drive_loss_down() {
    // two identical pairs, far apart: near-ideal arrangement should score
    // lower than an arrangement where classes are mixed up
    let tight = vec![
        vec![1.0, 0.0],
        vec![1.0, 0.0],
        vec![-1.0, 0.0],
        vec![-1.0, 0.0],
    ];
    let mixed = vec![
        vec![1.0, 0.0],
        vec![-1.0, 0.0],
        vec![1.0, 0.0],
        vec![-1.0, 0.0],
    ];
    let labels = [0usize, 0, 1, 1];
    let eval = |rows: &[Vec<f64>]| {
        let g = Graph::new();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let v = g.leaf(&Tensor::new(&[4, 2], flat).unwrap());
        g.value(supcon_loss_node(&g, v, &labels, 0.2).unwrap()).item()
    };
    assert!(eval(&tight) < eval(&mixed) - 1.0);
}

#[test]
fn supcon_rejects_degenerate_batches() {
    let g = Graph::new();
    let v = g.leaf(&Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    // anchor without a positive
    assert!(matches!(
        supcon_loss_node(&g, v, &[0, 1], 0.2),
        Err(ModelError::Invalid(_))
    ));
    assert!(matches!(
        supcon_loss_node(&g, v, &[], 0.2),
        Err(ModelError::EmptyInput)
    ));
    assert!(matches!(
        supcon_loss_node(&g, v, &[0, 0], 0.0),
        Err(ModelError::Invalid(_))
    ));
}

#[test]
fn centroid_is_plain_mean_not_renormalized() {
    let emb = Embedder::new(16, 8, 3);
    let imgs = [random_image(16, 1), random_image(16, 2), random_image(16, 3)];
    let c = centroid(&emb, &imgs).unwrap();

    let mut mean = vec![0.0f64; 8];
    for img in &imgs {
        let v = emb.embed(img).unwrap();
        for (m, &x) in mean.iter_mut().zip(v.data()) {
            *m += x / 3.0;
        }
    }
    for (a, b) in c.data().iter().zip(&mean) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
    // mean of distinct unit vectors lands strictly inside the sphere
    let norm: f64 = c.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm < 1.0 - 1e-6, "centroid should not be re-normalized, got norm {norm}");
}

#[test]
fn centroid_of_single_image_is_its_embedding() {
    let emb = Embedder::new(16, 8, 3);
    let img = random_image(16, 9);
    let c = centroid(&emb, std::slice::from_ref(&img)).unwrap();
    assert_eq!(c.data(), emb.embed(&img).unwrap().data());
}

#[test]
fn centroid_is_permutation_invariant_and_rejects_empty() {
    let emb = Embedder::new(16, 8, 3);
    let a = random_image(16, 4);
    let b = random_image(16, 5);
    let c1 = centroid(&emb, &[a.clone(), b.clone()]).unwrap();
    let c2 = centroid(&emb, &[b, a]).unwrap();
    for (x, y) in c1.data().iter().zip(c2.data()) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-12);
    }
    assert!(matches!(centroid(&emb, &[]), Err(ModelError::EmptyInput)));
}

#[test]
fn training_reduces_contrastive_loss_and_separates_classes() {
    let out = synthdata::synth_dataset(&tiny_spec()).unwrap();
    let mut emb = Embedder::new(16, 8, 0);
    let cfg = EmbedderTrainConfig {
        steps: 60,
        per_class: 2,
        lr: 3e-3,
        temperature: 0.2,
        seed: 0,
    };
    let losses = train_embedder(&mut emb, &out.train, 3, &cfg).unwrap();
    assert_eq!(losses.len(), 60);
    let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = losses[50..].iter().sum::<f64>() / 10.0;
    assert!(
        tail < head,
        "contrastive loss should fall: first10 {head:.4} last10 {tail:.4}"
    );

    // held-out within-class cosine should beat cross-class cosine
    let test = &out.test;
    let embs: Vec<Tensor> = test.images.iter().map(|i| emb.embed(i).unwrap()).collect();
    let (mut within, mut cross) = ((0.0, 0usize), (0.0, 0usize));
    for i in 0..embs.len() {
        for j in (i + 1)..embs.len() {
            let cos: f64 = embs[i].data().iter().zip(embs[j].data()).map(|(a, b)| a * b).sum();
            if test.labels[i] == test.labels[j] {
                within = (within.0 + cos, within.1 + 1);
            } else {
                cross = (cross.0 + cos, cross.1 + 1);
            }
        }
    }
    let within = within.0 / within.1 as f64;
    let cross = cross.0 / cross.1 as f64;
    assert!(
        within > cross + 0.05,
        "within-class cosine {within:.3} should exceed cross-class {cross:.3}"
    );
}

#[test]
fn training_is_deterministic() {
    let out = synthdata::synth_dataset(&tiny_spec()).unwrap();
    let cfg = EmbedderTrainConfig {
        steps: 8,
        per_class: 2,
        lr: 2e-3,
        temperature: 0.2,
        seed: 42,
    };
    let run = || {
        let mut emb = Embedder::new(16, 8, 1);
        let losses = train_embedder(&mut emb, &out.train, 3, &cfg).unwrap();
        (emb.weight_digest(), losses)
    };
    let (d1, l1) = run();
    let (d2, l2) = run();
    assert_eq!(d1, d2);
    assert_eq!(l1, l2);
}

#[test]
fn checkpoint_roundtrip_preserves_weights_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.ckpt");
    let emb = Embedder::new(16, 8, 5);
    emb.save(&path).unwrap();
    let re = Embedder::load(&path).unwrap();
    assert_eq!(re.image_size, 16);
    assert_eq!(re.dim, 8);
    assert_eq!(re.weight_digest(), emb.weight_digest());
    let img = random_image(16, 2);
    assert_eq!(re.embed(&img).unwrap().data(), emb.embed(&img).unwrap().data());
}

#[test]
fn centroid_table_indexes_by_class() {
    let out = synthdata::synth_dataset(&tiny_spec()).unwrap();
    let emb = Embedder::new(16, 8, 0);
    let table = build_centroid_table(&emb, &out.test, 3).unwrap();
    assert_eq!(table.n_classes(), 3);
    for c in 0..3 {
        let imgs: Vec<Tensor> = out
            .test
            .of_class(c)
            .into_iter()
            .map(|i| out.test.images[i].clone())
            .collect();
        let direct = centroid(&emb, &imgs).unwrap();
        assert_eq!(table.get(c).unwrap().data(), direct.data());
    }
    assert!(matches!(
        table.get(3),
        Err(ModelError::UnknownClass { id: 3, n_classes: 3 })
    ));
}

#[test]
fn linear_probe_solves_separable_embeddings() {
    // trivially separable: class c concentrated near axis c with small noise
    let rng = &mut stream(0, "probe/fixture");
    let mk = |class: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        use rand::Rng;
        let mut v = vec![0.0f64; 4];
        for (i, x) in v.iter_mut().enumerate() {
            *x = if i == class { 1.0 } else { 0.0 } + 0.1 * (rng.gen::<f64>() - 0.5);
        }
        Tensor::new(&[4], v).unwrap()
    };
    let mut train_emb = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_emb = Vec::new();
    let mut test_labels = Vec::new();
    for class in 0..3 {
        for _ in 0..20 {
            train_emb.push(mk(class, rng));
            train_labels.push(class);
        }
        for _ in 0..8 {
            test_emb.push(mk(class, rng));
            test_labels.push(class);
        }
    }
    let acc = linear_probe(&train_emb, &train_labels, &test_emb, &test_labels, 3, 0).unwrap();
    assert!(acc > 0.99, "probe should nail separable data, got {acc}");
}

#[test]
fn linear_probe_rejects_empty_sets() {
    let v = Tensor::new(&[2], vec![1.0, 0.0]).unwrap();
    assert!(matches!(
        linear_probe(&[], &[], &[v.clone()], &[0], 2, 0),
        Err(ModelError::EmptyInput)
    ));
    assert!(matches!(
        linear_probe(&[v], &[0], &[], &[], 2, 0),
        Err(ModelError::EmptyInput)
    ));
}

/// Dataset with a class that has zero members should fail centroid building.
#[test]
fn centroid_table_rejects_missing_class() {
    let out = synthdata::synth_dataset(&tiny_spec()).unwrap();
    let emb = Embedder::new(16, 8, 0);
    let only_two = Dataset {
        images: out
            .train
            .images
            .iter()
            .zip(&out.train.labels)
            .filter(|(_, &l)| l < 2)
            .map(|(i, _)| i.clone())
            .collect(),
        labels: out.train.labels.iter().copied().filter(|&l| l < 2).collect(),
    };
    assert!(build_centroid_table(&emb, &only_two, 3).is_err());
}
