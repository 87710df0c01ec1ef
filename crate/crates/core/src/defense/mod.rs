//! Validator-side inspection (HLBIM), significance-driven pruning and
//! server-side vote aggregation.

mod prune;
mod votes;

pub use prune::{prune_metric, prune_vote, significance, PruneIteration, PruneTrace, SignificanceVerdict};
pub use votes::{
    ablation_scenarios, ablation_table, aggregate_votes, detection_metrics, AblationRow, AblationScenario,
    AggregationRule, DetectionMetrics, VoteMatrix, VoteVector,
};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{LayeredModel, Metric};
use serde::Serialize;

/// How a layer distance enters the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// `|r - 1| (r - 1)` with `r` the distance relative to the validator's own model.
    #[default]
    Relative,
    /// The raw distance to the global model, for ablation only.
    Absolute,
}

/// One validator's inspection matrix for one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HlbimMatrix {
    pub metric: Metric,
    pub validator_index: usize,
    /// `(label, layer)` for every column, labels-major.
    pub columns: Vec<(usize, usize)>,
    /// One row per local model.
    pub values: Vec<Vec<f64>>,
}

impl HlbimMatrix {
    pub fn model_count(&self) -> usize {
        self.values.len()
    }
}

/// Scaled relative distance `|r - 1| (r - 1)`.
pub fn scaled_ratio(r: f64) -> f64 {
    (r - 1.0).abs() * (r - 1.0)
}

/// `d / own`, with `0 / 0 = 1` and the denominator clamped to machine epsilon.
pub fn distance_ratio(d: f64, own: f64) -> f64 {
    if d == 0.0 && own == 0.0 {
        1.0
    } else {
        d / own.max(f64::EPSILON)
    }
}

/// Streaming per-label accumulator of layer distances.
struct Accumulator {
    metric: Metric,
    mode: DistanceMode,
    own: usize,
    models: usize,
    layers: usize,
    // label -> model -> layer
    sums: Vec<Vec<Vec<f64>>>,
    counts: Vec<usize>,
}

impl Accumulator {
    fn new(metric: Metric, mode: DistanceMode, own: usize, models: usize, layers: usize) -> Self {
        Self { metric, mode, own, models, layers, sums: Vec::new(), counts: Vec::new() }
    }

    fn push(&mut self, label: usize, global: &[Vec<f64>], locals: &[Vec<Vec<f64>>]) {
        if label >= self.counts.len() {
            self.counts.resize(label + 1, 0);
            self.sums.resize(label + 1, vec![vec![0.0; self.layers]; self.models]);
        }
        self.counts[label] += 1;
        for l in 0..self.layers {
            let own_d = self.metric.distance(&locals[self.own][l], &global[l]);
            for (m, local) in locals.iter().enumerate() {
                let d = if m == self.own { own_d } else { self.metric.distance(&local[l], &global[l]) };
                let v = match self.mode {
                    DistanceMode::Relative => scaled_ratio(distance_ratio(d, own_d)),
                    DistanceMode::Absolute => d,
                };
                self.sums[label][m][l] += v;
            }
        }
    }

    fn finish(self) -> HlbimMatrix {
        let mut columns = Vec::new();
        let mut values = vec![Vec::new(); self.models];
        for (label, &count) in self.counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            for l in 0..self.layers {
                columns.push((label, l));
                for (m, row) in values.iter_mut().enumerate() {
                    row.push(self.sums[label][m][l] / count as f64);
                }
            }
        }
        HlbimMatrix { metric: self.metric, validator_index: self.own, columns, values }
    }
}

/// Builds the matrix from precomputed layer outputs.
///
/// `global_dlos[s][l]` is the global model's output of layer `l` on sample
/// `s`; `local_dlos[m][s][l]` is the same for local model `m`.
pub fn hlbim_from_dlos(
    global_dlos: &[Vec<Vec<f64>>],
    local_dlos: &[Vec<Vec<Vec<f64>>>],
    labels: &[usize],
    own_index: usize,
    metric: Metric,
    mode: DistanceMode,
) -> Result<HlbimMatrix> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if own_index >= local_dlos.len() {
        return Err(Error::Defense(format!("own index {own_index} out of {} models", local_dlos.len())));
    }
    if global_dlos.len() != labels.len() || local_dlos.iter().any(|m| m.len() != labels.len()) {
        return Err(Error::Defense("layer outputs do not cover every sample".into()));
    }
    let layers = global_dlos[0].len();
    let mut acc = Accumulator::new(metric, mode, own_index, local_dlos.len(), layers);
    let mut per_sample: Vec<Vec<Vec<f64>>> = Vec::with_capacity(local_dlos.len());
    for (s, &label) in labels.iter().enumerate() {
        per_sample.clear();
        for m in local_dlos {
            if m[s].len() != layers {
                return Err(Error::ArchitectureMismatch);
            }
            per_sample.push(m[s].clone());
        }
        acc.push(label, &global_dlos[s], &per_sample);
    }
    Ok(acc.finish())
}

fn check_models(global: &LayeredModel, locals: &[LayeredModel], own_index: usize, shard: &Dataset) -> Result<()> {
    if shard.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if own_index >= locals.len() {
        return Err(Error::Defense(format!("own index {own_index} out of {} models", locals.len())));
    }
    if locals.iter().any(|m| !m.same_architecture(global)) {
        return Err(Error::ArchitectureMismatch);
    }
    Ok(())
}

/// Matrices for several metrics from one pass over the shard.
pub fn compute_hlbim_multi(
    global: &LayeredModel,
    locals: &[LayeredModel],
    own_index: usize,
    shard: &Dataset,
    metrics: &[Metric],
    mode: DistanceMode,
) -> Result<Vec<HlbimMatrix>> {
    check_models(global, locals, own_index, shard)?;
    let layers = global.layer_count();
    let mut accs: Vec<Accumulator> =
        metrics.iter().map(|&m| Accumulator::new(m, mode, own_index, locals.len(), layers)).collect();
    let mut local_dlos = Vec::with_capacity(locals.len());
    for sample in shard.samples() {
        let (_, g) = global.forward_with_dlo(&sample.input)?;
        local_dlos.clear();
        for m in locals {
            local_dlos.push(m.forward_with_dlo(&sample.input)?.1);
        }
        for acc in &mut accs {
            acc.push(sample.label, &g, &local_dlos);
        }
    }
    Ok(accs.into_iter().map(Accumulator::finish).collect())
}

pub fn compute_hlbim(
    global: &LayeredModel,
    locals: &[LayeredModel],
    own_index: usize,
    shard: &Dataset,
    metric: Metric,
) -> Result<HlbimMatrix> {
    let mut out = compute_hlbim_multi(global, locals, own_index, shard, &[metric], DistanceMode::Relative)?;
    Ok(out.remove(0))
}
