//! Faithfulness-vs-frequency curves: per-class generation accuracy under a
//! balanced classifier, aggregated over frequency bands.

use corpus::Band;
use models::Classifier;
use serde::{Deserialize, Serialize};
use tensor::Tensor;

use crate::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEval {
    pub class: usize,
    /// Training-frequency count for this class.
    pub frequency: u64,
    pub band: String,
    pub n_generated: usize,
    pub n_correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessCurve {
    /// Classes sorted by frequency descending (ties by class id).
    pub per_class: Vec<ClassEval>,
    /// Mean accuracy per band; absent when the band holds no classes.
    pub many_mean: Option<f64>,
    pub med_mean: Option<f64>,
    pub few_mean: Option<f64>,
    /// Mean accuracy of the rarest ⌈n/4⌉ classes.
    pub tail_quartile_mean: f64,
    pub hi_threshold: u64,
    pub lo_threshold: u64,
}

impl FaithfulnessCurve {
    /// TSV rows: class, frequency, band, n_generated, n_correct, accuracy.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("class\tfrequency\tband\tn_generated\tn_correct\taccuracy\n");
        for c in &self.per_class {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                c.class, c.frequency, c.band, c.n_generated, c.n_correct, c.accuracy
            ));
        }
        out
    }
}

/// Score generated images per class with a frozen classifier and aggregate
/// over the Many/Med/Few frequency split.
///
/// `generated`: per class id, the generated images. `frequencies[c]` is the
/// training-corpus count for class c and must cover every generated class.
pub fn faithfulness_curve(
    generated: &[(usize, Vec<Tensor>)],
    classifier: &Classifier,
    frequencies: &[u64],
    hi: u64,
    lo: u64,
) -> Result<FaithfulnessCurve, EvalError> {
    if hi <= lo || lo == 0 {
        return Err(EvalError::Invalid(format!(
            "band thresholds need hi > lo > 0, got hi {hi} lo {lo}"
        )));
    }
    if generated.is_empty() {
        return Err(EvalError::Invalid("no generated classes".into()));
    }
    let mut per_class = Vec::with_capacity(generated.len());
    for (class, images) in generated {
        let frequency = *frequencies
            .get(*class)
            .ok_or(EvalError::MissingFrequency(*class))?;
        if images.is_empty() {
            return Err(EvalError::Invalid(format!(
                "class {class} has no generated images"
            )));
        }
        let mut n_correct = 0usize;
        for img in images {
            if classifier.predict(img)? == *class {
                n_correct += 1;
            }
        }
        per_class.push(ClassEval {
            class: *class,
            frequency,
            band: Band::of(frequency, hi, lo).to_string(),
            n_generated: images.len(),
            n_correct,
            accuracy: n_correct as f64 / images.len() as f64,
        });
    }
    per_class.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then_with(|| a.class.cmp(&b.class))
    });

    let band_mean = |band: Band| {
        let accs: Vec<f64> = per_class
            .iter()
            .filter(|c| c.band == band.to_string())
            .map(|c| c.accuracy)
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    };

    let n = per_class.len();
    let tail_n = n.div_ceil(4).max(1);
    let tail_quartile_mean = per_class[n - tail_n..]
        .iter()
        .map(|c| c.accuracy)
        .sum::<f64>()
        / tail_n as f64;

    Ok(FaithfulnessCurve {
        many_mean: band_mean(Band::Many),
        med_mean: band_mean(Band::Med),
        few_mean: band_mean(Band::Few),
        tail_quartile_mean,
        hi_threshold: hi,
        lo_threshold: lo,
        per_class,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::DimMismatch(format!(
            "{} xs vs {} ys",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFewPoints {
            need: 2,
            got: xs.len(),
        });
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    Ok(pearson(&rx, &ry))
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks are 1-based; ties share the average of their span
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}
