//! Seeded synthetic segmentation data.
//!
//! Each image is a weighted Voronoi partition of the plane: class regions
//! grow with their weight, and the weights are spread geometrically so the
//! dataset always contains both large and small structures. Per-pixel
//! features are one-hot class evidence, box-blurred (which smears evidence
//! across region boundaries) and corrupted with additive Gaussian noise.

use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, LabelVolume};

/// Largest region weight, assigned to the background class 0.
const BACKGROUND_WEIGHT: f64 = 2.5;
/// Foreground region weights run geometrically over this range.
const WEIGHT_MIN: f64 = 0.4;
const WEIGHT_MAX: f64 = 2.0;
/// Attempts to find a seed whose training split covers every class.
const MAX_COVERAGE_ATTEMPTS: u64 = 64;

/// Generator configuration; `seed` fixes the dataset completely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub width: usize,
    pub height: usize,
    pub n_train: usize,
    pub n_val: usize,
    /// Standard deviation of the additive Gaussian feature noise.
    pub noise_sigma: f64,
    /// 3x3 box-blur passes applied to the one-hot evidence.
    pub blur_passes: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("synthetic data needs at least 2 classes"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        if self.n_train == 0 {
            return Err(Error::invalid("need at least one training image"));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        Ok(())
    }

    pub fn n_images(&self) -> usize {
        self.n_train + self.n_val
    }
}

/// Per-pixel feature vectors, channel-major (`values[c * n_px + p]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub width: usize,
    pub height: usize,
    pub n_channels: usize,
    pub values: Vec<f64>,
}

impl ImageFeatures {
    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.n_pixels();
        &self.values[c * n..(c + 1) * n]
    }
}

/// Images, their label volumes, and the train/validation split.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SynthConfig,
    pub images: Vec<ImageFeatures>,
    pub labels: Vec<LabelVolume>,
}

impl SyntheticDataset {
    pub fn train_range(&self) -> std::ops::Range<usize> {
        0..self.config.n_train
    }

    pub fn val_range(&self) -> std::ops::Range<usize> {
        self.config.n_train..self.config.n_images()
    }
}

/// Region weights: background large, foreground geometric from small to large.
fn region_weights(n_classes: usize) -> Vec<f64> {
    let mut weights = Vec::with_capacity(n_classes);
    weights.push(BACKGROUND_WEIGHT);
    let foreground = n_classes - 1;
    for i in 0..foreground {
        let t = if foreground > 1 {
            i as f64 / (foreground - 1) as f64
        } else {
            0.5
        };
        weights.push(WEIGHT_MIN * (WEIGHT_MAX / WEIGHT_MIN).powf(t));
    }
    weights
}

fn generate_labels(
    config: &SynthConfig,
    weights: &[f64],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> LabelVolume {
    let (w, h) = (config.width, config.height);
    let sites: Vec<(f64, f64)> = (0..config.n_classes)
        .map(|_| {
            (
                rng.random::<f64>() * w as f64,
                rng.random::<f64>() * h as f64,
            )
        })
        .collect();
    let inv_w2: Vec<f64> = weights.iter().map(|wt| 1.0 / (wt * wt)).collect();
    let mut labels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut best = (f64::INFINITY, 0u16);
            for (c, &(sx, sy)) in sites.iter().enumerate() {
                let d2 = ((px - sx).powi(2) + (py - sy).powi(2)) * inv_w2[c];
                if d2 < best.0 {
                    best = (d2, c as u16);
                }
            }
            labels.push(best.1);
        }
    }
    LabelVolume {
        dims: Dims { x: w, y: h, z: 1 },
        labels,
    }
}

/// One 3x3 box-blur pass, renormalized at borders by the in-bounds count.
fn box_blur(channel: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; channel.len()];
    for y in 0..height {
        for x in 0..width {
            let mut sum = 0.0;
            let mut count = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx >= 0 && nx < width as i64 && ny >= 0 && ny < height as i64 {
                        sum += channel[ny as usize * width + nx as usize];
                        count += 1.0;
                    }
                }
            }
            out[y * width + x] = sum / count;
        }
    }
    out
}

fn generate_features(
    config: &SynthConfig,
    labels: &LabelVolume,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> ImageFeatures {
    let n_px = config.width * config.height;
    let mut values = vec![0.0; config.n_classes * n_px];
    for (p, &label) in labels.labels.iter().enumerate() {
        values[label as usize * n_px + p] = 1.0;
    }
    for c in 0..config.n_classes {
        for _ in 0..config.blur_passes {
            let blurred = box_blur(&values[c * n_px..(c + 1) * n_px], config.width, config.height);
            values[c * n_px..(c + 1) * n_px].copy_from_slice(&blurred);
        }
    }
    if config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).expect("sigma validated");
        for v in values.iter_mut() {
            *v += normal.sample(rng);
        }
    }
    ImageFeatures {
        width: config.width,
        height: config.height,
        n_channels: config.n_classes,
        values,
    }
}

/// Generate a dataset, retrying derived seeds until the training split
/// contains every class at least once.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let weights = region_weights(config.n_classes);
    for attempt in 0..MAX_COVERAGE_ATTEMPTS {
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(attempt << 32));
        let mut labels = Vec::with_capacity(config.n_images());
        let mut images = Vec::with_capacity(config.n_images());
        for _ in 0..config.n_images() {
            let label = generate_labels(config, &weights, &mut rng);
            let image = generate_features(config, &label, &mut rng);
            labels.push(label);
            images.push(image);
        }
        let mut covered = vec![false; config.n_classes];
        for label in &labels[..config.n_train] {
            for &l in &label.labels {
                covered[l as usize] = true;
            }
        }
        if covered.iter().all(|&c| c) {
            return Ok(SyntheticDataset {
                config: config.clone(),
                images,
                labels,
            });
        }
    }
    Err(Error::invalid(format!(
        "no seed in {MAX_COVERAGE_ATTEMPTS} attempts covered all {} classes; \
         enlarge the images or reduce the class count",
        config.n_classes
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> SynthConfig {
        SynthConfig {
            n_classes: 12,
            width: 32,
            height: 32,
            n_train: 4,
            n_val: 2,
            noise_sigma: 0.3,
            blur_passes: 1,
            seed: 5,
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_synthetic(&config()).unwrap();
        let b = generate_synthetic(&config()).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.images, b.images);
        let mut other = config();
        other.seed = 6;
        let c = generate_synthetic(&other).unwrap();
        assert_ne!(a.labels, c.labels);
    }

    #[test]
    fn training_split_covers_every_class() {
        let mut cfg = config();
        cfg.n_classes = 108;
        cfg.width = 64;
        cfg.height = 64;
        cfg.n_train = 8;
        let data = generate_synthetic(&cfg).unwrap();
        let mut covered = vec![false; cfg.n_classes];
        for label in &data.labels[..cfg.n_train] {
            for &l in &label.labels {
                covered[l as usize] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn zero_noise_zero_blur_features_are_exact_one_hot() {
        let mut cfg = config();
        cfg.noise_sigma = 0.0;
        cfg.blur_passes = 0;
        let data = generate_synthetic(&cfg).unwrap();
        let image = &data.images[0];
        let labels = &data.labels[0];
        let n_px = image.n_pixels();
        for (p, &label) in labels.labels.iter().enumerate() {
            for c in 0..cfg.n_classes {
                let expected = if c == label as usize { 1.0 } else { 0.0 };
                assert_eq!(image.values[c * n_px + p], expected);
            }
        }
    }

    #[test]
    fn structure_sizes_are_skewed() {
        // The largest class region should dwarf the smallest by design.
        let data = generate_synthetic(&config()).unwrap();
        let mut counts = [0usize; 12];
        for label in &data.labels {
            for &l in &label.labels {
                counts[l as usize] += 1;
            }
        }
        let max = *counts.iter().max().unwrap();
        let min = *counts.iter().filter(|&&c| c > 0).min().unwrap();
        assert!(
            max as f64 >= 4.0 * min as f64,
            "expected skewed sizes, got min {min} max {max}"
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = config();
        cfg.n_classes = 1;
        assert!(generate_synthetic(&cfg).is_err());
        let mut cfg = config();
        cfg.n_train = 0;
        assert!(generate_synthetic(&cfg).is_err());
        let mut cfg = config();
        cfg.noise_sigma = -1.0;
        assert!(generate_synthetic(&cfg).is_err());
    }
}
