//! Synthetic datasets: gaussian blobs and rings for fast vector-input
//! experiments, and template images in CIFAR-like tensor layout for
//! desk-scale convolutional runs.

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    GaussianBlobs,
    Rings,
}

/// Fully determines a synthetic vector dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub classes: usize,
    pub n: usize,
    pub dim: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Builds a balanced synthetic dataset (class counts differ by at most 1),
/// min-max scaled per dimension into [0, 1]. Same spec, same bits.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.classes < 2 {
        return Err(Error::Contract("synthetic data needs at least 2 classes".into()));
    }
    if spec.n < spec.classes {
        return Err(Error::Contract("synthetic data needs n >= classes".into()));
    }
    let mut rng = Rng::new(spec.seed);
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    let mut raw = vec![0.0; spec.n * spec.dim];
    match spec.kind {
        SyntheticKind::GaussianBlobs => {
            if spec.dim == 0 {
                return Err(Error::Contract("blobs need dim >= 1".into()));
            }
            let centers: Vec<f64> = (0..spec.classes * spec.dim)
                .map(|_| rng.uniform())
                .collect();
            for (i, &label) in labels.iter().enumerate() {
                for d in 0..spec.dim {
                    raw[i * spec.dim + d] =
                        centers[label * spec.dim + d] + spec.noise * rng.gaussian();
                }
            }
        }
        SyntheticKind::Rings => {
            if spec.dim < 2 {
                return Err(Error::Contract("rings need dim >= 2".into()));
            }
            for (i, &label) in labels.iter().enumerate() {
                let radius = (label + 1) as f64 / (spec.classes + 1) as f64
                    + spec.noise * rng.gaussian();
                let theta = rng.uniform_in(0.0, std::f64::consts::TAU);
                raw[i * spec.dim] = radius * theta.cos();
                raw[i * spec.dim + 1] = radius * theta.sin();
                for d in 2..spec.dim {
                    raw[i * spec.dim + d] = spec.noise * rng.gaussian();
                }
            }
        }
    }
    min_max_scale(&mut raw, spec.n, spec.dim);
    Dataset::new(
        Tensor::new(&[spec.n, spec.dim], raw)?,
        labels,
        spec.classes,
    )
}

fn min_max_scale(raw: &mut [f64], n: usize, dim: usize) {
    for d in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let v = raw[i * dim + d];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let range = hi - lo;
        for i in 0..n {
            let v = &mut raw[i * dim + d];
            *v = if range < 1e-12 { 0.5 } else { (*v - lo) / range };
        }
    }
}

/// Class-template images: every class gets a smooth random 3x32x32
/// template; examples are the template blended with a shared background
/// plus pixel noise. Produces the confusable-classes structure that
/// convolutional desk-scale runs need.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateImageSpec {
    pub classes: usize,
    pub per_class: usize,
    /// Pixel noise standard deviation.
    pub noise: f64,
    /// Fraction of a shared background mixed into every template, in
    /// [0, 1); higher means more confusable classes.
    pub blend: f64,
    pub seed: u64,
}

pub fn make_template_images(spec: &TemplateImageSpec) -> Result<Dataset> {
    if spec.classes < 2 || spec.classes > 10 {
        return Err(Error::Contract("template images support 2..=10 classes".into()));
    }
    if spec.per_class == 0 {
        return Err(Error::Contract("template images need per_class >= 1".into()));
    }
    if !(0.0..1.0).contains(&spec.blend) {
        return Err(Error::Contract("blend must lie in [0, 1)".into()));
    }
    const SIZE: usize = 32;
    const CHANNELS: usize = 3;
    let image_len = CHANNELS * SIZE * SIZE;
    let mut rng = Rng::new(spec.seed);
    let background = smooth_field(&mut rng, CHANNELS, SIZE);
    let templates: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let own = smooth_field(&mut rng, CHANNELS, SIZE);
            own.iter()
                .zip(&background)
                .map(|(o, b)| (1.0 - spec.blend) * o + spec.blend * b)
                .collect()
        })
        .collect();
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * image_len);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % spec.classes;
        labels.push(class);
        for &t in &templates[class] {
            data.push((t + spec.noise * rng.gaussian()).clamp(0.0, 1.0));
        }
    }
    Dataset::new(
        Tensor::new(&[n, CHANNELS, SIZE, SIZE], data)?,
        labels,
        spec.classes,
    )
}

/// A smooth random field: coarse 4x4 grid per channel, bilinearly
/// upsampled, values kept away from the clamp rails.
fn smooth_field(rng: &mut Rng, channels: usize, size: usize) -> Vec<f64> {
    const COARSE: usize = 4;
    let mut field = vec![0.0; channels * size * size];
    for c in 0..channels {
        let grid: Vec<f64> = (0..COARSE * COARSE)
            .map(|_| rng.uniform_in(0.2, 0.8))
            .collect();
        for y in 0..size {
            for x in 0..size {
                let gy = y as f64 / size as f64 * (COARSE - 1) as f64;
                let gx = x as f64 / size as f64 * (COARSE - 1) as f64;
                let (y0, x0) = (gy.floor() as usize, gx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(COARSE - 1), (x0 + 1).min(COARSE - 1));
                let (fy, fx) = (gy - y0 as f64, gx - x0 as f64);
                let top = grid[y0 * COARSE + x0] * (1.0 - fx) + grid[y0 * COARSE + x1] * fx;
                let bottom = grid[y1 * COARSE + x0] * (1.0 - fx) + grid[y1 * COARSE + x1] * fx;
                field[(c * size + y) * size + x] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    field
}
