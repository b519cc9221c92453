//! Feature-set helpers: validation and Gaussian moment estimation.

use nalgebra::{DMatrix, DVector};
use tensor::Tensor;

use crate::EvalError;

/// Validate a feature set and return (n, dim). Every row must share one
/// dimension and be finite.
pub fn check_features(features: &[Tensor], min_points: usize) -> Result<(usize, usize), EvalError> {
    if features.len() < min_points {
        return Err(EvalError::TooFewPoints {
            need: min_points,
            got: features.len(),
        });
    }
    let dim = features[0].len();
    for f in features {
        if f.len() != dim {
            return Err(EvalError::DimMismatch(format!(
                "rows of {} and {} elements in one feature set",
                dim,
                f.len()
            )));
        }
        if f.data().iter().any(|x| !x.is_finite()) {
            return Err(EvalError::NonFinite);
        }
    }
    Ok((features.len(), dim))
}

/// Rows-as-points matrix [n, dim].
pub fn to_matrix(features: &[Tensor]) -> DMatrix<f64> {
    let n = features.len();
    let dim = features[0].len();
    DMatrix::from_fn(n, dim, |i, j| features[i].data()[j])
}

/// Sample mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    /// Requires n ≥ 2 (unbiased covariance divides by n − 1).
    pub fn fit(features: &[Tensor]) -> Result<Self, EvalError> {
        let (n, dim) = check_features(features, 2)?;
        let x = to_matrix(features);
        let mean = DVector::from_fn(dim, |j, _| x.column(j).sum() / n as f64);
        let mut centered = x;
        for i in 0..n {
            for j in 0..dim {
                centered[(i, j)] -= mean[j];
            }
        }
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        Ok(Self { mean, cov })
    }
}
