//! Dataset shape: class roster, frequency decay, split sizes.

use crate::render::ShapeFamily;
use crate::SynthError;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub n_classes: usize,
    /// Training images for the most frequent class.
    pub head_count: usize,
    /// Geometric decay ratio r: class i gets round(head_count · rⁱ) images.
    pub decay: f64,
    pub image_size: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        // decay 0.58 is the steepest ratio that keeps the 12th class at the
        // 5-image floor: round(2000 · 0.58¹¹) = 5
        Self {
            n_classes: 12,
            head_count: 2000,
            decay: 0.58,
            image_size: 32,
            test_per_class: 200,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let max = ShapeFamily::ALL.len();
        if self.n_classes == 0 || self.n_classes > max {
            return Err(SynthError::BadClassCount {
                got: self.n_classes,
                max,
            });
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(SynthError::BadDecay(self.decay));
        }
        if self.image_size < 8 || self.image_size % 2 != 0 {
            return Err(SynthError::BadImageSize(self.image_size));
        }
        self.train_counts().map(|_| ())
    }

    /// Long-tailed per-class training counts: round(head_count · decayⁱ),
    /// every class must keep at least 5 images.
    pub fn train_counts(&self) -> Result<Vec<usize>, SynthError> {
        (0..self.n_classes)
            .map(|i| {
                let count = (self.head_count as f64 * self.decay.powi(i as i32)).round() as usize;
                if count < 5 {
                    Err(SynthError::TooFewImages { class: i, count })
                } else {
                    Ok(count)
                }
            })
            .collect()
    }

    pub fn families(&self) -> &'static [ShapeFamily] {
        &ShapeFamily::ALL[..self.n_classes]
    }

    pub fn class_names(&self) -> Vec<&'static str> {
        self.families().iter().map(|f| f.name()).collect()
    }
}
