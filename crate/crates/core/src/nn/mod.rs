//! Minimal layered network engine. Every forward pass can expose the output of
//! each layer (the deep layer outputs used by the defense).

mod checkpoint;
mod layer;
mod train;

pub use checkpoint::{load_model, save_model, ModelCheckpoint};
pub use layer::{Layer, LayerSpec, Shape};
pub use train::{cross_entropy, mean_loss, train_local, train_with_objective, Objective, TrainingConfig};

use crate::error::{Error, Result};
use crate::rng::seeded;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Distance between flattened parameter (or activation) vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    Euclidean,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        }
    }

    /// Euclidean distance, or `1 - cosine similarity` clamped to `[0, 2]`.
    /// Two zero vectors are at cosine distance 0; a zero and a non-zero vector
    /// are at distance 1.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                match (na == 0.0, nb == 0.0) {
                    (true, true) => 0.0,
                    (true, false) | (false, true) => 1.0,
                    _ => (1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0),
                }
            }
        }
    }
}

/// Feed-forward classifier built from a list of layer descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredModel {
    input_shape: Shape,
    layers: Vec<Layer>,
}

impl LayeredModel {
    /// Builds a model with fan-in scaled uniform weights and zero biases.
    pub fn new(input_shape: Shape, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(input_shape, specs)?;
        let mut rng = seeded(seed);
        for layer in &mut model.layers {
            let fan_in = layer.fan_in();
            if fan_in == 0 {
                continue;
            }
            let bound = (6.0 / fan_in as f64).sqrt();
            let wc = layer.weight_count();
            for w in &mut layer.params[..wc] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    /// Builds a model with every parameter set to zero.
    pub fn zeros(input_shape: Shape, specs: &[LayerSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidModel("a model needs at least one layer".into()));
        }
        if input_shape.is_empty() {
            return Err(Error::InvalidModel("empty input shape".into()));
        }
        let mut shape = input_shape;
        let mut layers = Vec::with_capacity(specs.len());
        for &spec in specs {
            let (output, n_params) = Layer::resolve(spec, shape)
                .ok_or_else(|| Error::InvalidModel(format!("{spec:?} does not fit input {shape:?}")))?;
            layers.push(Layer { spec, input: shape, output, params: vec![0.0; n_params] });
            shape = output;
        }
        Ok(Self { input_shape, layers })
    }

    /// Two hidden ReLU layers on a flat input.
    pub fn mlp(input: Shape, hidden: [usize; 2], classes: usize, seed: u64) -> Result<Self> {
        Self::new(input, &mlp_specs(hidden, classes), seed)
    }

    /// Two convolution blocks followed by two dense layers.
    pub fn cnn(input: Shape, classes: usize, seed: u64) -> Result<Self> {
        Self::new(input, &cnn_specs(classes), seed)
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn output_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output.len())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ArchitectureMismatch);
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let n = layer.params.len();
            layer.params.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn same_architecture(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.spec == b.spec && a.params.len() == b.params.len())
    }

    fn check_input(&self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.input_shape.len() {
            return Err(Error::InputShape { expected: self.input_shape.len(), actual: sample.len() });
        }
        Ok(())
    }

    /// Final logits only.
    pub fn forward(&self, sample: &[f64]) -> Result<Vec<f64>> {
        self.check_input(sample)?;
        let mut x = sample.to_vec();
        for layer in &self.layers {
            x = layer.forward(&x);
        }
        Ok(x)
    }

    /// Logits plus the output of every layer, in layer order. The last entry
    /// is the logits vector.
    pub fn forward_with_dlo(&self, sample: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        self.check_input(sample)?;
        let mut dlos: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let out = layer.forward(dlos.last().map_or(sample, |v| v.as_slice()));
            dlos.push(out);
        }
        let logits = dlos.last().cloned().unwrap_or_default();
        Ok((logits, dlos))
    }

    /// Index of the largest logit; ties resolve to the lowest class.
    pub fn predict(&self, sample: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(sample)?))
    }

    /// Fraction of `data` predicted correctly.
    pub fn accuracy(&self, data: &crate::data::Dataset) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0usize;
        for s in data.samples() {
            if self.predict(&s.input)? == s.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

pub fn mlp_specs(hidden: [usize; 2], classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense { outputs: hidden[0] },
        LayerSpec::Relu,
        LayerSpec::Dense { outputs: hidden[1] },
        LayerSpec::Relu,
        LayerSpec::Dense { outputs: classes },
    ]
}

pub fn cnn_specs(classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d { channels: 8, kernel: 3 },
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { size: 2 },
        LayerSpec::Conv2d { channels: 16, kernel: 3 },
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { size: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense { outputs: 64 },
        LayerSpec::Relu,
        LayerSpec::Dense { outputs: classes },
    ]
}

/// First index of the maximum value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Distance between the flattened parameter vectors of two models.
pub fn param_distance(a: &LayeredModel, b: &LayeredModel, metric: Metric) -> Result<f64> {
    if !a.same_architecture(b) {
        return Err(Error::ArchitectureMismatch);
    }
    Ok(metric.distance(&a.flat_params(), &b.flat_params()))
}
