//! Fréchet distance between the Gaussian fits of two feature sets.

use nalgebra::{DMatrix, SymmetricEigen};
use tensor::Tensor;

use crate::stats::GaussianStats;
use crate::EvalError;

const EIG_CLAMP: f64 = -1e-8;

/// Symmetric PSD square root via eigendecomposition. Eigenvalues in
/// [−1e-8, 0) are treated as rounding noise and clamped to 0; anything more
/// negative is a genuine failure.
fn sqrt_sym(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>, EvalError> {
    let eig = SymmetricEigen::new(m.clone());
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        if *v < 0.0 {
            if *v < EIG_CLAMP {
                return Err(EvalError::Numerical(format!(
                    "{what} has eigenvalue {v} below the {EIG_CLAMP} clamp"
                )));
            }
            *v = 0.0;
        }
    }
    let q = eig.eigenvectors;
    let sqrt_d = DMatrix::from_diagonal(&vals.map(f64::sqrt));
    Ok(&q * sqrt_d * q.transpose())
}

/// ‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2·(Σ₁Σ₂)^{1/2}).
///
/// tr((Σ₁Σ₂)^{1/2}) is computed as tr((A·Σ₂·A)^{1/2}) with A = Σ₁^{1/2};
/// the two matrices are similar, so the eigenvalues (hence the trace of the
/// square root) agree, and A·Σ₂·A is symmetric PSD, which keeps the
/// eigendecomposition stable. A final result in [−1e-8, 0) is clamped to 0.
pub fn fid(real_features: &[Tensor], gen_features: &[Tensor]) -> Result<f64, EvalError> {
    let a = GaussianStats::fit(real_features)?;
    let b = GaussianStats::fit(gen_features)?;
    if a.mean.len() != b.mean.len() {
        return Err(EvalError::DimMismatch(format!(
            "real dim {} vs generated dim {}",
            a.mean.len(),
            b.mean.len()
        )));
    }

    let diff = &a.mean - &b.mean;
    let mean_term = diff.dot(&diff);

    let sqrt_a = sqrt_sym(&a.cov, "real covariance")?;
    let inner = &sqrt_a * &b.cov * &sqrt_a;
    // symmetrize against rounding drift before decomposing
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross = sqrt_sym(&inner, "covariance product")?;

    let value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    if value < 0.0 {
        if value < EIG_CLAMP {
            return Err(EvalError::Numerical(format!(
                "FID evaluated to {value}, below the numerical tolerance"
            )));
        }
        return Ok(0.0);
    }
    if !value.is_finite() {
        return Err(EvalError::Numerical("FID is non-finite".into()));
    }
    Ok(value)
}
