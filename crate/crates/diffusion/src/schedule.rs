//! Linear variance schedule with cumulative signal coefficients.

use tensor::Tensor;

use crate::DiffusionError;

/// β_t for t = 1..=T and ᾱ_t = Π_{s≤t}(1−β_s), with the ᾱ_0 = 1 convention.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    t_train: usize,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear betas from `beta_start` to `beta_end` inclusive over `t_train`
    /// steps.
    pub fn linear(t_train: usize, beta_start: f64, beta_end: f64) -> Self {
        assert!(t_train >= 1);
        assert!(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0);
        let betas: Vec<f64> = (0..t_train)
            .map(|i| {
                if t_train == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (t_train - 1) as f64
                }
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(t_train + 1);
        alpha_bars.push(1.0);
        let mut prod = 1.0;
        for &b in &betas {
            prod *= 1.0 - b;
            alpha_bars.push(prod);
        }
        Self {
            t_train,
            betas,
            alpha_bars,
        }
    }

    pub fn default_toy() -> Self {
        Self::linear(1000, 1e-4, 2e-2)
    }

    pub fn t_train(&self) -> usize {
        self.t_train
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// Evenly strided sub-schedule for few-step sampling, descending:
    /// t_i = (steps − i) · (T / steps) for i = 0.., e.g. 7 steps over
    /// T = 1000 → [994, 852, 710, 568, 426, 284, 142].
    pub fn timesteps(&self, steps: usize) -> Result<Vec<usize>, DiffusionError> {
        if steps == 0 || steps > self.t_train {
            return Err(DiffusionError::BadSteps {
                steps,
                t_train: self.t_train,
            });
        }
        let stride = self.t_train / steps;
        Ok((1..=steps).map(|i| i * stride).rev().collect())
    }

    /// Closed-form forward process z_t = √ᾱ_t·z0 + √(1−ᾱ_t)·ε.
    pub fn add_noise(
        &self,
        z0: &Tensor,
        t: usize,
        eps: &Tensor,
    ) -> Result<Tensor, DiffusionError> {
        if t > self.t_train {
            return Err(DiffusionError::BadTimestep {
                t,
                t_train: self.t_train,
            });
        }
        Ok(add_noise_coeff(self.alpha_bar(t), z0, eps))
    }
}

/// The forward-process mix for a given ᾱ value (exposed for hand fixtures).
pub fn add_noise_coeff(alpha_bar: f64, z0: &Tensor, eps: &Tensor) -> Tensor {
    assert_eq!(z0.shape(), eps.shape(), "noise must match latent shape");
    let (sa, sn) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    z0.zip(eps, |a, b| sa * a + sn * b)
        .expect("shapes already checked")
}
