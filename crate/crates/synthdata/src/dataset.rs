//! Dataset assembly: long-tailed train split, balanced test split, optional
//! PNG + manifest export.

use std::path::{Path, PathBuf};

use tensor::rng::stream;
use tensor::Tensor;

use crate::render::render_image;
use crate::spec::DatasetSpec;
use crate::SynthError;

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Indices of every image with the given label.
    pub fn of_class(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub train: Dataset,
    pub test: Dataset,
    pub train_counts: Vec<usize>,
    pub class_names: Vec<&'static str>,
}

/// Render the full dataset in memory, deterministically from the spec seed.
/// Every image gets its own derived RNG stream, so counts can change for one
/// class without disturbing any other image.
pub fn synth_dataset(spec: &DatasetSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let counts = spec.train_counts()?;
    let families = spec.families();

    let mut train = Dataset::default();
    let mut test = Dataset::default();
    for (class, &family) in families.iter().enumerate() {
        for i in 0..counts[class] {
            let mut rng = stream(spec.seed, &format!("synth/train/{class}/{i}"));
            train
                .images
                .push(render_image(family, class, spec.n_classes, spec.image_size, &mut rng));
            train.labels.push(class);
        }
        for i in 0..spec.test_per_class {
            let mut rng = stream(spec.seed, &format!("synth/test/{class}/{i}"));
            test.images
                .push(render_image(family, class, spec.n_classes, spec.image_size, &mut rng));
            test.labels.push(class);
        }
    }
    Ok(SynthOutput {
        train,
        test,
        train_counts: counts,
        class_names: spec.class_names(),
    })
}

/// Encode a [3,H,W] float image as 8-bit RGB PNG bytes-on-disk.
pub fn save_png(img: &Tensor, path: &Path) -> Result<(), SynthError> {
    let s = img.shape();
    let (h, w) = (s[1], s[2]);
    let data = img.data();
    let mut bytes = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = data[c * h * w + y * w + x];
                bytes.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    let buf = image::RgbImage::from_raw(w as u32, h as u32, bytes)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Load a PNG back into a [3,H,W] float image in [0,1].
pub fn load_png(path: &Path) -> Result<Tensor, SynthError> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f64; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[c * h * w + y as usize * w + x as usize] = px.0[c] as f64 / 255.0;
        }
    }
    Ok(Tensor::new(&[3, h, w], data).expect("buffer sized to shape"))
}

/// Render and export the dataset: PNG files under `dir/images/…` plus a
/// `manifest.tsv` of `path<TAB>class<TAB>split` rows. Returns the in-memory
/// dataset alongside the manifest path.
pub fn write_dataset(spec: &DatasetSpec, dir: &Path) -> Result<(SynthOutput, PathBuf), SynthError> {
    let out = synth_dataset(spec)?;
    let img_dir = dir.join("images");
    std::fs::create_dir_all(&img_dir)?;
    let mut manifest = String::new();

    let mut write_split = |split: &str, ds: &Dataset| -> Result<(), SynthError> {
        let mut per_class = vec![0usize; spec.n_classes];
        for (img, &label) in ds.images.iter().zip(&ds.labels) {
            let i = per_class[label];
            per_class[label] += 1;
            let rel = format!("images/{split}_c{label:02}_{i:04}.png");
            save_png(img, &dir.join(&rel))?;
            manifest.push_str(&format!("{rel}\t{label}\t{split}\n"));
        }
        Ok(())
    };
    write_split("train", &out.train)?;
    write_split("test", &out.test)?;

    let manifest_path = dir.join("manifest.tsv");
    std::fs::write(&manifest_path, manifest)?;
    Ok((out, manifest_path))
}
