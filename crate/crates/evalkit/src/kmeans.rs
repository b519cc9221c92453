//! Seeded, single-threaded Lloyd k-means with k-means++ initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tensor::rng::stream;
use tensor::Tensor;

use crate::stats::check_features;
use crate::EvalError;

const MAX_LLOYD_ITERS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// k centroids, each of the feature dimension. Clusters that end up
    /// empty keep their last centroid position.
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(point, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp_init(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].to_vec());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all points coincide with existing centroids: pick uniformly
            rng.gen_range(0..points.len())
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut idx = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        };
        centroids.push(points[next].to_vec());
        let last = centroids.last().expect("just pushed");
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, last);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Deterministic k-means: k-means++ seeding from the given stream seed, then
/// Lloyd iterations until assignments stabilize (or 100 iterations).
pub fn kmeans(features: &[Tensor], k: usize, seed: u64) -> Result<KMeansResult, EvalError> {
    if k == 0 {
        return Err(EvalError::Invalid("k must be ≥ 1".into()));
    }
    let (n, dim) = check_features(features, k)?;
    let points: Vec<&[f64]> = features.iter().map(|f| f.data()).collect();
    let rng = &mut stream(seed, "evalkit/kmeans");
    let mut centroids = kmeans_pp_init(&points, k, rng);
    let mut assignments = vec![0usize; n];

    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, &x) in sums[assignments[i]].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = std::mem::take(&mut sums[c]);
            }
        }
        if !changed {
            break;
        }
    }

    let inertia = points
        .iter()
        .enumerate()
        .map(|(i, p)| sq_dist(p, &centroids[assignments[i]]))
        .sum();
    Ok(KMeansResult {
        centroids,
        assignments,
        inertia,
    })
}

/// Several independently seeded runs; keeps the lowest-inertia result.
/// Deterministic for a given (seed, restarts).
pub fn kmeans_restarts(
    features: &[Tensor],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult, EvalError> {
    if restarts == 0 {
        return Err(EvalError::Invalid("restarts must be ≥ 1".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts {
        let run = kmeans(features, k, seed.wrapping_add(r as u64))?;
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts ≥ 1"))
}
