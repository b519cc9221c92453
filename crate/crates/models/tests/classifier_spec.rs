use approx::assert_abs_diff_eq;
use models::{train_classifier, Classifier, ClassifierTrainConfig, ModelError};
use synthdata::{render_image, DatasetSpec, ShapeFamily};
use tensor::nn::Leafs;
use tensor::rng::stream;
use tensor::{Graph, Tensor};

fn tiny_spec() -> DatasetSpec {
    DatasetSpec {
        n_classes: 3,
        head_count: 12,
        decay: 0.8,
        image_size: 16,
        test_per_class: 4,
        seed: 3,
    }
}

fn random_image(size: usize, seed: u64) -> Tensor {
    let rng = &mut stream(seed, "test/img");
    render_image(ShapeFamily::ALL[(seed % 12) as usize], seed as usize % 12, 12, size, rng)
}

#[test]
fn classify_returns_probability_simplex() {
    let clf = Classifier::new(16, 5, 1);
    for s in 0..4u64 {
        let p = clf.classify(&random_image(16, s)).unwrap();
        assert_eq!(p.shape(), &[5]);
        assert!(p.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert_abs_diff_eq!(p.data().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }
}

#[test]
fn loss_node_matches_negative_log_probability() {
    let clf = Classifier::new(16, 4, 2);
    let img = random_image(16, 6);
    let probs = clf.classify(&img).unwrap();
    for label in 0..4 {
        let g = Graph::new();
        let mut lf = Leafs::new(&clf.ps);
        let x = g.leaf(&img);
        let loss = clf.loss_node(&g, &mut lf, x, label).unwrap();
        let expect = -(probs.data()[label] + 1e-12).ln();
        assert_abs_diff_eq!(g.value(loss).item(), expect, epsilon = 1e-9);
    }
}

#[test]
fn loss_node_rejects_out_of_range_label() {
    let clf = Classifier::new(16, 4, 2);
    let g = Graph::new();
    let mut lf = Leafs::new(&clf.ps);
    let x = g.leaf(&random_image(16, 0));
    assert!(matches!(
        clf.loss_node(&g, &mut lf, x, 4),
        Err(ModelError::UnknownClass { id: 4, n_classes: 4 })
    ));
}

#[test]
fn training_reduces_loss_and_beats_chance() {
    let out = synthdata::synth_dataset(&tiny_spec()).unwrap();
    let mut clf = Classifier::new(16, 3, 0);
    let cfg = ClassifierTrainConfig {
        steps: 80,
        per_class: 2,
        lr: 3e-3,
        seed: 0,
    };
    let losses = train_classifier(&mut clf, &out.train, &cfg).unwrap();
    assert_eq!(losses.len(), 80);
    let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = losses[70..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "loss should fall: first10 {head:.4} last10 {tail:.4}");

    let acc = clf.balanced_accuracy(&out.test).unwrap();
    assert!(acc > 0.5, "3-class balanced accuracy {acc:.3} should beat chance 0.333");
}

#[test]
fn balanced_accuracy_is_mean_of_per_class() {
    let out = synthdata::synth_dataset(&tiny_spec()).unwrap();
    let clf = Classifier::new(16, 3, 4);
    let per = clf.per_class_accuracy(&out.test).unwrap();
    assert_eq!(per.len(), 3);
    let mean = per.iter().sum::<f64>() / 3.0;
    assert_abs_diff_eq!(clf.balanced_accuracy(&out.test).unwrap(), mean, epsilon = 1e-12);
}

#[test]
fn training_is_deterministic() {
    let out = synthdata::synth_dataset(&tiny_spec()).unwrap();
    let cfg = ClassifierTrainConfig {
        steps: 8,
        per_class: 2,
        lr: 2e-3,
        seed: 9,
    };
    let run = || {
        let mut clf = Classifier::new(16, 3, 1);
        let losses = train_classifier(&mut clf, &out.train, &cfg).unwrap();
        (clf.weight_digest(), losses)
    };
    let (d1, l1) = run();
    let (d2, l2) = run();
    assert_eq!(d1, d2);
    assert_eq!(l1, l2);
}

#[test]
fn checkpoint_roundtrip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.ckpt");
    let clf = Classifier::new(16, 3, 7);
    clf.save(&path).unwrap();
    let re = Classifier::load(&path).unwrap();
    assert_eq!(re.image_size, 16);
    assert_eq!(re.n_classes, 3);
    assert_eq!(re.weight_digest(), clf.weight_digest());
    let img = random_image(16, 8);
    assert_eq!(re.classify(&img).unwrap().data(), clf.classify(&img).unwrap().data());
}

#[test]
fn empty_dataset_rejected() {
    let mut clf = Classifier::new(16, 3, 0);
    let empty = synthdata::Dataset {
        images: vec![],
        labels: vec![],
    };
    assert!(matches!(
        train_classifier(&mut clf, &empty, &ClassifierTrainConfig::default()),
        Err(ModelError::EmptyInput)
    ));
}
