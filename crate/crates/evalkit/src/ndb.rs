//! Number of statistically Different Bins: k-means bins fitted on the real
//! set, two-proportion z-tests on per-bin occupancy.

use statrs::distribution::{ContinuousCDF, Normal};
use tensor::Tensor;

use crate::kmeans::{kmeans, nearest};
use crate::stats::check_features;
use crate::EvalError;

#[derive(Debug, Clone)]
pub struct NdbResult {
    /// Number of bins whose occupancy differs significantly.
    pub ndb: usize,
    /// Bins actually tested (after empty-bin merges).
    pub n_bins: usize,
    /// Per-bin z statistics.
    pub z_scores: Vec<f64>,
    /// Per-bin (real fraction, generated fraction).
    pub proportions: Vec<(f64, f64)>,
}

/// Bin the real set with seeded k-means, then count significantly different
/// bins at level `alpha` (two-sided, no multiplicity correction).
pub fn ndb(
    real_features: &[Tensor],
    gen_features: &[Tensor],
    n_bins: usize,
    alpha: f64,
    seed: u64,
) -> Result<NdbResult, EvalError> {
    if n_bins < 2 {
        return Err(EvalError::Invalid("n_bins must be ≥ 2".into()));
    }
    check_features(real_features, n_bins)?;
    check_features(gen_features, n_bins)?;
    let km = kmeans(real_features, n_bins, seed)?;
    ndb_with_centroids(real_features, gen_features, &km.centroids, alpha)
}

/// NDB against a fixed set of bin centroids. Bins that contain no real
/// points are merged away (logged): their centroid is removed and every
/// point re-assigns to the nearest remaining bin.
pub fn ndb_with_centroids(
    real_features: &[Tensor],
    gen_features: &[Tensor],
    centroids: &[Vec<f64>],
    alpha: f64,
) -> Result<NdbResult, EvalError> {
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(EvalError::Invalid(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let (n_real, dim) = check_features(real_features, 2)?;
    let (n_gen, dim_g) = check_features(gen_features, 2)?;
    if dim != dim_g {
        return Err(EvalError::DimMismatch(format!(
            "real dim {dim} vs generated dim {dim_g}"
        )));
    }
    if centroids.iter().any(|c| c.len() != dim) {
        return Err(EvalError::DimMismatch("centroid dimension".into()));
    }

    let mut bins: Vec<Vec<f64>> = centroids.to_vec();
    let assign = |feats: &[Tensor], bins: &[Vec<f64>]| -> Vec<usize> {
        feats.iter().map(|f| nearest(f.data(), bins).0).collect()
    };

    // merge away bins with no real members
    loop {
        if bins.len() < 2 {
            return Err(EvalError::Invalid(
                "fewer than two non-empty bins remain".into(),
            ));
        }
        let real_assign = assign(real_features, &bins);
        let mut counts = vec![0usize; bins.len()];
        for &a in &real_assign {
            counts[a] += 1;
        }
        match counts.iter().position(|&c| c == 0) {
            Some(empty) => {
                log::warn!(
                    "NDB bin {empty} holds no real points; merging into its nearest bin"
                );
                bins.remove(empty);
            }
            None => break,
        }
    }

    let real_assign = assign(real_features, &bins);
    let gen_assign = assign(gen_features, &bins);
    let k = bins.len();
    let mut real_counts = vec![0usize; k];
    let mut gen_counts = vec![0usize; k];
    for &a in &real_assign {
        real_counts[a] += 1;
    }
    for &a in &gen_assign {
        gen_counts[a] += 1;
    }

    let z_crit = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0);
    let mut z_scores = Vec::with_capacity(k);
    let mut proportions = Vec::with_capacity(k);
    let mut ndb = 0usize;
    for b in 0..k {
        let p1 = real_counts[b] as f64 / n_real as f64;
        let p2 = gen_counts[b] as f64 / n_gen as f64;
        let pooled = (real_counts[b] + gen_counts[b]) as f64 / (n_real + n_gen) as f64;
        let se = (pooled * (1.0 - pooled) * (1.0 / n_real as f64 + 1.0 / n_gen as f64)).sqrt();
        let z = if se == 0.0 { 0.0 } else { (p1 - p2) / se };
        if z.abs() > z_crit {
            ndb += 1;
        }
        z_scores.push(z);
        proportions.push((p1, p2));
    }

    Ok(NdbResult {
        ndb,
        n_bins: k,
        z_scores,
        proportions,
    })
}
