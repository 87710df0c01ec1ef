use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::nn::Shape;
use crate::rng::seeded;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Gaussian-blob dataset laid out as a small single-channel image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub shape: Shape,
    /// Distance between any two class means, in units of `noise`.
    pub separation: f64,
    /// Per-feature standard deviation around the class mean.
    pub noise: f64,
    /// Probability that a sample carries the latent attribute.
    pub attribute_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 600,
            shape: Shape::image(1, 8, 8),
            separation: 6.0,
            noise: 0.1,
            attribute_rate: 0.1,
            seed: 0,
        }
    }
}

/// Mean intensity that the class blobs are centred on.
const CENTER: f64 = 0.5;

/// Generates one blob per class. Class means sit on mutually orthogonal
/// random directions so every pair is `separation * noise` apart. Samples
/// with the latent attribute get a stripe added to the bottom image row.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if !(spec.separation > 0.0) {
        return Err(Error::Partition(format!("separation must be positive, got {}", spec.separation)));
    }
    if spec.per_class == 0 || spec.classes == 0 {
        return Err(Error::EmptyDataset);
    }
    let dim = spec.shape.len();
    if spec.classes > dim {
        return Err(Error::Partition(format!("{} classes need at least as many features, got {dim}", spec.classes)));
    }
    let mut rng = seeded(spec.seed);

    // Gram-Schmidt on Gaussian vectors
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    while dirs.len() < spec.classes {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for d in &dirs {
            let dot: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(d).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            dirs.push(v);
        }
    }
    let radius = spec.separation * spec.noise / std::f64::consts::SQRT_2;
    let stripe = stripe_pattern(spec.shape, 3.0 * spec.noise);

    let mut samples = Vec::with_capacity(spec.classes * spec.per_class);
    for _ in 0..spec.per_class {
        for (label, dir) in dirs.iter().enumerate() {
            let attribute = rng.random_bool(spec.attribute_rate.clamp(0.0, 1.0));
            let mut input: Vec<f64> = dir
                .iter()
                .map(|d| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    CENTER + radius * d + spec.noise * z
                })
                .collect();
            if attribute {
                input.iter_mut().zip(&stripe).for_each(|(x, s)| *x += s);
            }
            samples.push(Sample { input, label, attribute });
        }
    }
    Dataset::new(spec.shape, spec.classes, samples)
}

/// Alternating `+amp, -amp` over the last image row (or the last eight
/// features of a flat input); zero elsewhere.
pub(crate) fn stripe_pattern(shape: Shape, amp: f64) -> Vec<f64> {
    let len = shape.len();
    let width = if shape.height > 1 { shape.width } else { len.min(8) };
    let mut out = vec![0.0; len];
    for (k, v) in out[len - width..].iter_mut().enumerate() {
        *v = if k % 2 == 0 { amp } else { -amp };
    }
    out
}
