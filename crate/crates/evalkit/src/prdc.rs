//! Precision, recall, density (Fidelity) and coverage (Diversity) via
//! k-nearest-neighbor manifold estimates.

use serde::{Deserialize, Serialize};
use tensor::Tensor;

use crate::stats::check_features;
use crate::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrdcResult {
    pub precision: f64,
    pub recall: f64,
    /// Reported as Fidelity.
    pub density: f64,
    /// Reported as Diversity.
    pub coverage: f64,
    pub k: usize,
}

fn pairwise(a: &[Tensor], b: &[Tensor]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    x.data()
                        .iter()
                        .zip(y.data())
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect()
}

/// Distance from each point to its k-th nearest other point in the same set.
fn knn_radii(dists: &[Vec<f64>], k: usize) -> Vec<f64> {
    dists
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut others: Vec<f64> = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &d)| d)
                .collect();
            others.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            others[k - 1]
        })
        .collect()
}

/// Manifold membership uses the strict inequality d < radius, matching the
/// reference formulation; a sample exactly on a radius boundary is outside.
pub fn prdc(
    real_features: &[Tensor],
    gen_features: &[Tensor],
    k_neighbors: usize,
) -> Result<PrdcResult, EvalError> {
    if k_neighbors == 0 {
        return Err(EvalError::Invalid("k_neighbors must be ≥ 1".into()));
    }
    let (n, dim_r) = check_features(real_features, k_neighbors + 1)?;
    let (m, dim_g) = check_features(gen_features, k_neighbors + 1)?;
    if dim_r != dim_g {
        return Err(EvalError::DimMismatch(format!(
            "real dim {dim_r} vs generated dim {dim_g}"
        )));
    }

    let rr = pairwise(real_features, real_features);
    let gg = pairwise(gen_features, gen_features);
    let rg = pairwise(real_features, gen_features); // [n][m]
    let real_radii = knn_radii(&rr, k_neighbors);
    let gen_radii = knn_radii(&gg, k_neighbors);

    // precision: fraction of generated points inside some real ball
    let mut precision_hits = 0usize;
    // density: average number of real balls covering each generated point
    let mut density_sum = 0usize;
    for j in 0..m {
        let covering = (0..n).filter(|&i| rg[i][j] < real_radii[i]).count();
        if covering > 0 {
            precision_hits += 1;
        }
        density_sum += covering;
    }

    // recall: fraction of real points inside some generated ball
    let mut recall_hits = 0usize;
    // coverage: fraction of real points with a generated point inside their
    // own k-NN ball
    let mut coverage_hits = 0usize;
    for i in 0..n {
        if (0..m).any(|j| rg[i][j] < gen_radii[j]) {
            recall_hits += 1;
        }
        if (0..m).any(|j| rg[i][j] < real_radii[i]) {
            coverage_hits += 1;
        }
    }

    Ok(PrdcResult {
        precision: precision_hits as f64 / m as f64,
        recall: recall_hits as f64 / n as f64,
        density: density_sum as f64 / (k_neighbors * m) as f64,
        coverage: coverage_hits as f64 / n as f64,
        k: k_neighbors,
    })
}
