//! Faithfulness curves: pass-through accuracy, band aggregation, ordering,
//! and the rank correlation helper.

use approx::assert_relative_eq;
use evalkit::{faithfulness_curve, spearman, EvalError};
use models::Classifier;
use synthdata::{render_image, Dataset, ShapeFamily};
use tensor::rng::stream;
use tensor::Tensor;

const SIZE: usize = 16;

fn class_images(class: usize, n_classes: usize, k: usize, tag: &str) -> Vec<Tensor> {
    (0..k)
        .map(|i| {
            let rng = &mut stream(700 + i as u64, tag);
            render_image(ShapeFamily::ALL[class], class, n_classes, SIZE, rng)
        })
        .collect()
}

fn dataset(n_classes: usize, per_class: usize, tag: &str) -> Dataset {
    let mut ds = Dataset::default();
    for c in 0..n_classes {
        for img in class_images(c, n_classes, per_class, tag) {
            ds.images.push(img);
            ds.labels.push(c);
        }
    }
    ds
}

/// Replaying real images as the "generated" set must reproduce the
/// classifier's own per-class accuracy, whatever that happens to be.
#[test]
fn replaying_real_images_matches_classifier_accuracy() {
    let clf = Classifier::new(SIZE, 3, 7);
    let test = dataset(3, 6, "faith/pass");
    let generated: Vec<(usize, Vec<Tensor>)> = (0..3)
        .map(|c| {
            let imgs = test
                .of_class(c)
                .into_iter()
                .map(|i| test.images[i].clone())
                .collect();
            (c, imgs)
        })
        .collect();

    let curve = faithfulness_curve(&generated, &clf, &[600, 100, 8], 500, 50).unwrap();
    let own = clf.per_class_accuracy(&test).unwrap();
    assert_eq!(curve.per_class.len(), 3);
    for entry in &curve.per_class {
        assert_eq!(entry.accuracy, own[entry.class], "class {}", entry.class);
        assert_eq!(entry.n_generated, 6);
    }
    // frequencies 600 / 100 / 8 against thresholds 500 / 50
    assert_eq!(curve.per_class[0].band, "Many");
    assert_eq!(curve.per_class[1].band, "Med");
    assert_eq!(curve.per_class[2].band, "Few");
    assert_eq!(curve.many_mean, Some(own[0]));
    assert_eq!(curve.med_mean, Some(own[1]));
    assert_eq!(curve.few_mean, Some(own[2]));
    // three classes → the tail quartile is the single rarest class
    assert_eq!(curve.tail_quartile_mean, own[2]);
}

#[test]
fn band_means_average_their_member_classes() {
    let clf = Classifier::new(SIZE, 5, 3);
    let generated: Vec<(usize, Vec<Tensor>)> = (0..5)
        .map(|c| (c, class_images(c, 5, 4, "faith/agg")))
        .collect();
    let curve =
        faithfulness_curve(&generated, &clf, &[700, 600, 300, 40, 10], 500, 50).unwrap();

    let acc = |class: usize| {
        curve
            .per_class
            .iter()
            .find(|e| e.class == class)
            .unwrap()
            .accuracy
    };
    assert_relative_eq!(
        curve.many_mean.unwrap(),
        (acc(0) + acc(1)) / 2.0,
        max_relative = 1e-12
    );
    assert_eq!(curve.med_mean, Some(acc(2)));
    assert_relative_eq!(
        curve.few_mean.unwrap(),
        (acc(3) + acc(4)) / 2.0,
        max_relative = 1e-12
    );
    // five classes → ⌈5/4⌉ = 2 rarest classes form the tail
    assert_relative_eq!(
        curve.tail_quartile_mean,
        (acc(3) + acc(4)) / 2.0,
        max_relative = 1e-12
    );
}

#[test]
fn classes_sort_by_frequency_descending_then_class_id() {
    let clf = Classifier::new(SIZE, 3, 1);
    let generated: Vec<(usize, Vec<Tensor>)> = (0..3)
        .map(|c| (c, class_images(c, 3, 2, "faith/sort")))
        .collect();
    let curve = faithfulness_curve(&generated, &clf, &[100, 100, 5000], 500, 50).unwrap();
    let order: Vec<usize> = curve.per_class.iter().map(|e| e.class).collect();
    assert_eq!(order, vec![2, 0, 1]);
}

#[test]
fn threshold_boundaries_fall_in_the_middle_band() {
    let clf = Classifier::new(SIZE, 2, 2);
    let generated: Vec<(usize, Vec<Tensor>)> = (0..2)
        .map(|c| (c, class_images(c, 2, 2, "faith/bounds")))
        .collect();
    // counts exactly at the thresholds are Med: Many needs > hi, Few needs < lo
    let curve = faithfulness_curve(&generated, &clf, &[500, 50], 500, 50).unwrap();
    assert!(curve.per_class.iter().all(|e| e.band == "Med"));
    assert_eq!(curve.many_mean, None);
    assert_eq!(curve.few_mean, None);
    assert!(curve.med_mean.is_some());
}

#[test]
fn missing_frequency_entry_is_an_error() {
    let clf = Classifier::new(SIZE, 3, 0);
    let generated = vec![(2usize, class_images(2, 3, 1, "faith/miss"))];
    assert!(matches!(
        faithfulness_curve(&generated, &clf, &[100, 100], 500, 50),
        Err(EvalError::MissingFrequency(2))
    ));
}

#[test]
fn rejects_bad_thresholds_and_empty_classes() {
    let clf = Classifier::new(SIZE, 2, 0);
    let generated: Vec<(usize, Vec<Tensor>)> = (0..2)
        .map(|c| (c, class_images(c, 2, 1, "faith/bad")))
        .collect();
    assert!(matches!(
        faithfulness_curve(&generated, &clf, &[10, 10], 50, 50),
        Err(EvalError::Invalid(_))
    ));
    assert!(matches!(
        faithfulness_curve(&generated, &clf, &[10, 10], 500, 0),
        Err(EvalError::Invalid(_))
    ));
    let with_empty = vec![(0usize, Vec::<Tensor>::new())];
    assert!(matches!(
        faithfulness_curve(&with_empty, &clf, &[10], 500, 50),
        Err(EvalError::Invalid(_))
    ));
    assert!(matches!(
        faithfulness_curve(&[], &clf, &[10], 500, 50),
        Err(EvalError::Invalid(_))
    ));
}

#[test]
fn tsv_has_a_header_and_one_row_per_class() {
    let clf = Classifier::new(SIZE, 3, 2);
    let generated: Vec<(usize, Vec<Tensor>)> = (0..3)
        .map(|c| (c, class_images(c, 3, 1, "faith/tsv")))
        .collect();
    let curve = faithfulness_curve(&generated, &clf, &[900, 90, 9], 500, 50).unwrap();
    let tsv = curve.to_tsv();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(
        lines[0],
        "class\tfrequency\tband\tn_generated\tn_correct\taccuracy"
    );
    assert!(lines[1].starts_with("0\t900\tMany\t"));
}

#[test]
fn spearman_handles_monotone_and_reversed_data() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let up = [10.0, 100.0, 1e3, 1e4, 1e5];
    let down = [5.0, 4.0, 3.0, 2.0, 1.0];
    assert_relative_eq!(spearman(&xs, &up).unwrap(), 1.0, max_relative = 1e-12);
    assert_relative_eq!(spearman(&xs, &down).unwrap(), -1.0, max_relative = 1e-12);
}

#[test]
fn spearman_averages_tied_ranks() {
    // ranks of xs = [1, 2.5, 2.5, 4]; pearson against [1,2,3,4] = √0.9
    let xs = [1.0, 2.0, 2.0, 3.0];
    let ys = [10.0, 20.0, 30.0, 40.0];
    assert_relative_eq!(
        spearman(&xs, &ys).unwrap(),
        0.9f64.sqrt(),
        max_relative = 1e-12
    );
}

#[test]
fn spearman_degenerate_and_error_cases() {
    // zero variance in one argument is reported as zero correlation
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    assert!(matches!(
        spearman(&[1.0, 2.0], &[1.0]),
        Err(EvalError::DimMismatch(_))
    ));
    assert!(matches!(
        spearman(&[1.0], &[1.0]),
        Err(EvalError::TooFewPoints { .. })
    ));
}
