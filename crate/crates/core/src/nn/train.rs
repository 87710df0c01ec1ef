use super::LayeredModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::seeded;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Mini-batch SGD settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 64, learning_rate: 0.01, seed: 0 }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidTraining("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidTraining("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidTraining("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// What the optimizer minimises.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Softmax cross-entropy.
    CrossEntropy,
    /// `alpha * cross_entropy + (1 - alpha) * ||params - anchor||_2`.
    Anchored { alpha: f64, anchor: &'a LayeredModel },
    /// Gradient ascent on the cross-entropy.
    Ascent,
}

/// Softmax cross-entropy of `logits` against `label` and its gradient with
/// respect to the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Mean cross-entropy of `model` over `data`.
pub fn mean_loss(model: &LayeredModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for s in data.samples() {
        total += cross_entropy(&model.forward(&s.input)?, s.label).0;
    }
    Ok(total / data.len() as f64)
}

/// Adds the cross-entropy gradient for one sample into `grads` (one vector per
/// layer) and returns the sample loss.
pub(crate) fn accumulate_gradient(
    model: &LayeredModel,
    input: &[f64],
    label: usize,
    scale: f64,
    grads: &mut [Vec<f64>],
) -> f64 {
    let layers = model.layers();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len() + 1);
    acts.push(input.to_vec());
    for layer in layers {
        let next = layer.forward(acts.last().expect("non-empty"));
        acts.push(next);
    }
    let (loss, mut g) = cross_entropy(acts.last().expect("non-empty"), label);
    g.iter_mut().for_each(|v| *v *= scale);
    for (i, layer) in layers.iter().enumerate().rev() {
        g = layer.backward(&acts[i], &g, &mut grads[i]);
    }
    loss
}

/// Trains a copy of `model` on `data` with plain SGD on the cross-entropy.
pub fn train_local(model: &LayeredModel, data: &Dataset, cfg: &TrainingConfig) -> Result<LayeredModel> {
    train_with_objective(model, data, cfg, Objective::CrossEntropy)
}

/// Trains a copy of `model` with the given objective. Deterministic for a
/// fixed `cfg.seed`: the seed drives the per-epoch shuffle only.
pub fn train_with_objective(
    model: &LayeredModel,
    data: &Dataset,
    cfg: &TrainingConfig,
    objective: Objective<'_>,
) -> Result<LayeredModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.input_len() != model.input_shape().len() {
        return Err(Error::InputShape { expected: model.input_shape().len(), actual: data.input_len() });
    }
    if let Some(s) = data.samples().iter().find(|s| s.label >= model.output_classes()) {
        return Err(Error::InvalidTraining(format!("label {} out of range", s.label)));
    }
    let (ce_weight, sign) = match objective {
        Objective::CrossEntropy => (1.0, 1.0),
        Objective::Anchored { alpha, anchor } => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::InvalidTraining(format!("alpha {alpha} outside (0, 1]")));
            }
            if !anchor.same_architecture(model) {
                return Err(Error::ArchitectureMismatch);
            }
            (alpha, 1.0)
        }
        Objective::Ascent => (1.0, -1.0),
    };
    let anchor_flat = match objective {
        Objective::Anchored { alpha, anchor } if alpha < 1.0 => Some((1.0 - alpha, anchor.flat_params())),
        _ => None,
    };

    let mut model = model.clone();
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let samples = data.samples();
    let mut grads: Vec<Vec<f64>> = model.layers().iter().map(|l| vec![0.0; l.params.len()]).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let scale = ce_weight / batch.len() as f64;
            for &i in batch {
                accumulate_gradient(&model, &samples[i].input, samples[i].label, scale, &mut grads);
            }
            if let Some((weight, anchor)) = &anchor_flat {
                add_anchor_gradient(&model, anchor, *weight, &mut grads);
            }
            let lr = cfg.learning_rate * sign;
            for (layer, g) in model.layers_mut().iter_mut().zip(&grads) {
                for (p, d) in layer.params.iter_mut().zip(g) {
                    *p -= lr * d;
                }
            }
        }
    }
    Ok(model)
}

// d/dw ||w - a|| = (w - a) / ||w - a||
fn add_anchor_gradient(model: &LayeredModel, anchor: &[f64], weight: f64, grads: &mut [Vec<f64>]) {
    let flat = model.flat_params();
    let norm = flat.iter().zip(anchor).map(|(w, a)| (w - a).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    let mut k = 0;
    for g in grads.iter_mut() {
        for v in g.iter_mut() {
            *v += weight * (flat[k] - anchor[k]) / norm;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Sample};
    use crate::nn::{LayerSpec, Shape};

    fn toy_net(seed: u64) -> LayeredModel {
        let specs = [
            LayerSpec::Dense { outputs: 5 },
            LayerSpec::Relu,
            LayerSpec::Dense { outputs: 4 },
            LayerSpec::Relu,
            LayerSpec::Dense { outputs: 3 },
        ];
        LayeredModel::new(Shape::flat(3), &specs, seed).unwrap()
    }

    fn loss_at(model: &LayeredModel, x: &[f64], y: usize) -> f64 {
        cross_entropy(&model.forward(x).unwrap(), y).0
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let model = toy_net(3);
        let x = [0.7, -1.2, 0.4];
        let y = 2;
        let mut grads: Vec<Vec<f64>> = model.layers().iter().map(|l| vec![0.0; l.params.len()]).collect();
        accumulate_gradient(&model, &x, y, 1.0, &mut grads);
        let analytic: Vec<f64> = grads.into_iter().flatten().collect();
        let base = model.flat_params();
        let h = 1e-6;
        for k in 0..base.len() {
            let mut plus = model.clone();
            let mut p = base.clone();
            p[k] += h;
            plus.set_flat_params(&p).unwrap();
            let mut minus = model.clone();
            p[k] -= 2.0 * h;
            minus.set_flat_params(&p).unwrap();
            let numeric = (loss_at(&plus, &x, y) - loss_at(&minus, &x, y)) / (2.0 * h);
            let denom = numeric.abs().max(analytic[k].abs()).max(1e-8);
            assert!(
                (numeric - analytic[k]).abs() / denom < 1e-4 || (numeric - analytic[k]).abs() < 1e-9,
                "param {k}: analytic {} numeric {numeric}",
                analytic[k]
            );
        }
    }

    #[test]
    fn conv_gradient_matches_central_differences() {
        let specs = [
            LayerSpec::Conv2d { channels: 2, kernel: 2 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { outputs: 3 },
        ];
        let model = LayeredModel::new(Shape::image(1, 5, 5), &specs, 8).unwrap();
        let x: Vec<f64> = (0..25).map(|i| ((i * 7 % 11) as f64) / 10.0 - 0.4).collect();
        let mut grads: Vec<Vec<f64>> = model.layers().iter().map(|l| vec![0.0; l.params.len()]).collect();
        accumulate_gradient(&model, &x, 1, 1.0, &mut grads);
        let analytic: Vec<f64> = grads.into_iter().flatten().collect();
        let base = model.flat_params();
        let h = 1e-6;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] += h;
            let mut plus = model.clone();
            plus.set_flat_params(&p).unwrap();
            p[k] -= 2.0 * h;
            let mut minus = model.clone();
            minus.set_flat_params(&p).unwrap();
            let numeric = (loss_at(&plus, &x, 1) - loss_at(&minus, &x, 1)) / (2.0 * h);
            let err = (numeric - analytic[k]).abs();
            assert!(err < 1e-6 || err / numeric.abs().max(1e-8) < 1e-4, "param {k}");
        }
    }

    fn blobs() -> Dataset {
        let mut samples = Vec::new();
        for i in 0..40 {
            let t = i as f64 / 40.0;
            samples.push(Sample::new(vec![1.0 + t, 0.5 - t, 0.2], 0));
            samples.push(Sample::new(vec![-1.0 - t, -0.5 + t, 0.1], 1));
        }
        Dataset::new(Shape::flat(3), 3, samples).unwrap()
    }

    #[test]
    fn full_batch_loss_never_increases() {
        let data = blobs();
        let cfg = TrainingConfig { epochs: 1, batch_size: data.len(), learning_rate: 0.05, seed: 1 };
        let mut model = toy_net(5);
        let mut last = mean_loss(&model, &data).unwrap();
        for _ in 0..30 {
            model = train_local(&model, &data, &cfg).unwrap();
            let loss = mean_loss(&model, &data).unwrap();
            assert!(loss <= last + 1e-12, "{loss} > {last}");
            last = loss;
        }
    }

    #[test]
    fn training_is_deterministic_and_pure() {
        let data = blobs();
        let cfg = TrainingConfig { epochs: 3, batch_size: 8, learning_rate: 0.1, seed: 42 };
        let model = toy_net(1);
        let before = model.clone();
        let a = train_local(&model, &data, &cfg).unwrap();
        let b = train_local(&model, &data, &cfg).unwrap();
        assert_eq!(model, before);
        let bits = |m: &LayeredModel| m.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&model));
    }

    #[test]
    fn invalid_configs_rejected() {
        let data = blobs();
        let model = toy_net(1);
        let zero_epochs = TrainingConfig { epochs: 0, ..TrainingConfig::default() };
        assert!(matches!(train_local(&model, &data, &zero_epochs), Err(Error::InvalidTraining(_))));
        let zero_batch = TrainingConfig { batch_size: 0, ..TrainingConfig::default() };
        assert!(train_local(&model, &data, &zero_batch).is_err());
        let bad_lr = TrainingConfig { learning_rate: 0.0, ..TrainingConfig::default() };
        assert!(train_local(&model, &data, &bad_lr).is_err());
        let empty = Dataset::new(Shape::flat(3), 3, Vec::new()).unwrap();
        assert!(matches!(train_local(&model, &empty, &TrainingConfig::default()), Err(Error::EmptyDataset)));
    }
}
