//! Elbow selection over an inertia curve.

use tensor::Tensor;

use crate::kmeans::kmeans_restarts;
use crate::EvalError;

/// Pick k by maximum discrete curvature (second difference) of an inertia
/// curve given for k = 1..=k_max. Ties choose the smallest k. The curve must
/// be non-increasing; an increasing segment is invalid input.
pub fn elbow(inertias: &[f64]) -> Result<usize, EvalError> {
    if inertias.len() < 3 {
        return Err(EvalError::Invalid(
            "elbow needs inertias for at least k = 1..=3".into(),
        ));
    }
    if inertias.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    if let Some(i) = inertias.windows(2).position(|w| w[1] > w[0]) {
        return Err(EvalError::Invalid(format!(
            "inertia increases from k = {} to k = {} ({} → {})",
            i + 1,
            i + 2,
            inertias[i],
            inertias[i + 1]
        )));
    }
    // curvature at interior k (1-indexed k = i+1): I[k−1] − 2·I[k] + I[k+1]
    let mut best_k = 2usize;
    let mut best_curv = f64::NEG_INFINITY;
    for i in 1..inertias.len() - 1 {
        let curv = inertias[i - 1] - 2.0 * inertias[i] + inertias[i + 1];
        if curv > best_curv {
            best_curv = curv;
            best_k = i + 1;
        }
    }
    Ok(best_k)
}

/// Fit k-means for k = 1..=k_max and return the elbow of the inertia curve.
/// Each k uses a few deterministic restarts so the curve stays monotone.
pub fn choose_k_by_elbow(
    features: &[Tensor],
    k_max: usize,
    seed: u64,
) -> Result<usize, EvalError> {
    if k_max < 3 {
        return Err(EvalError::Invalid("k_max must be ≥ 3".into()));
    }
    let mut inertias = Vec::with_capacity(k_max);
    let mut floor = f64::INFINITY;
    for k in 1..=k_max {
        let run = kmeans_restarts(features, k, seed, 4)?;
        // restarts make increases rare; clamp residual local-minimum noise
        // so the curve honors the non-increasing precondition
        floor = floor.min(run.inertia);
        inertias.push(floor);
    }
    elbow(&inertias)
}
