//! Datasets, loaders, synthetic generation and client partitioning.

mod idx;
mod partition;
mod synthetic;

pub use idx::{load_idx, parse_idx, write_idx_images, write_idx_labels};
pub use partition::{partition, ClientShard, PartitionScheme, PartitionSpec};
pub use synthetic::{gen_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::nn::Shape;
use crate::rng::seeded;
use rand::seq::SliceRandom;
use std::io::Write;
use std::path::Path;

/// One labelled input. `attribute` is the latent binary feature that semantic
/// triggers key on; loaders without such a feature leave it `false`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: usize,
    pub attribute: bool,
}

impl Sample {
    pub fn new(input: Vec<f64>, label: usize) -> Self {
        Self { input, label, attribute: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: Shape,
    label_count: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(shape: Shape, label_count: usize, samples: Vec<Sample>) -> Result<Self> {
        if label_count == 0 {
            return Err(Error::Partition("label_count must be positive".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.input.len() != shape.len() {
                return Err(Error::InputShape { expected: shape.len(), actual: s.input.len() });
            }
            if s.label >= label_count {
                return Err(Error::Partition(format!("sample {i} has label {} >= {label_count}", s.label)));
            }
        }
        Ok(Self { shape, label_count, samples })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn input_len(&self) -> usize {
        self.shape.len()
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_attribute(&self) -> bool {
        self.samples.iter().any(|s| s.attribute)
    }

    /// Per-label sample counts.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.label_count];
        for s in &self.samples {
            h[s.label] += 1;
        }
        h
    }

    /// Same shape and label space, different samples.
    pub fn with_samples(&self, samples: Vec<Sample>) -> Self {
        Self { shape: self.shape, label_count: self.label_count, samples }
    }

    /// First `n` samples (all when `n` exceeds the length).
    pub fn truncated(&self, n: usize) -> Self {
        self.with_samples(self.samples.iter().take(n).cloned().collect())
    }

    /// Stratified split: `test_per_label` samples of every label go to the
    /// second dataset.
    pub fn split_stratified(&self, test_per_label: usize, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut seeded(seed));
        let mut taken = vec![0usize; self.label_count];
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for i in idx {
            let s = &self.samples[i];
            if taken[s.label] < test_per_label {
                taken[s.label] += 1;
                test.push(s.clone());
            } else {
                train.push(s.clone());
            }
        }
        (self.with_samples(train), self.with_samples(test))
    }

    /// Writes `label,attribute,x0,x1,...` rows for inspection.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..self.input_len()).map(|i| format!("x{i}")).collect();
        writeln!(out, "label,attribute,{}", header.join(","))?;
        for s in &self.samples {
            let xs: Vec<String> = s.input.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{},{}", s.label, u8::from(s.attribute), xs.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}
