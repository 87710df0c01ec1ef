use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, SimRng};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    Iid,
    OneClass,
    TwoClass,
    Dirichlet,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSpec {
    pub scheme: PartitionScheme,
    /// Share of a shard drawn from the main label(s); the rest is uniform.
    pub q: f64,
    pub dirichlet_alpha: f64,
    pub client_count: usize,
    pub shard_size: usize,
    pub replacement: bool,
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            scheme: PartitionScheme::OneClass,
            q: 0.0,
            dirichlet_alpha: 0.5,
            client_count: 20,
            shard_size: 2560,
            replacement: false,
            seed: 0,
        }
    }
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::Partition(format!("q = {} outside [0, 1]", self.q)));
        }
        if !(self.dirichlet_alpha > 0.0) {
            return Err(Error::Partition("dirichlet_alpha must be positive".into()));
        }
        if self.client_count == 0 || self.shard_size == 0 {
            return Err(Error::Partition("client_count and shard_size must be positive".into()));
        }
        Ok(())
    }
}

/// One client's local data. The main label follows the client index.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub client_id: usize,
    pub main_label: usize,
    pub data: Dataset,
}

/// Splits `dataset` into `spec.client_count` shards of `spec.shard_size`.
///
/// Client `i` has main label `i mod L`. Without replacement no source sample
/// is used twice across all shards.
pub fn partition(dataset: &Dataset, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    spec.validate()?;
    let labels = dataset.label_count();
    if !spec.replacement && spec.client_count * spec.shard_size > dataset.len() {
        return Err(Error::Partition(format!(
            "{} clients x {} samples exceed the {} available",
            spec.client_count,
            spec.shard_size,
            dataset.len()
        )));
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); labels];
    for (i, s) in dataset.samples().iter().enumerate() {
        pools[s.label].push(i);
    }
    let mut rng = seeded(spec.seed);
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let by_label = pools.clone();

    let mut shards = Vec::with_capacity(spec.client_count);
    for client in 0..spec.client_count {
        let main = client % labels;
        let mut crng = seeded(derive_seed(spec.seed, &[client as u64]));
        let wanted = shard_labels(spec, labels, main, &mut crng)?;
        let mut samples = Vec::with_capacity(wanted.len());
        for label in wanted {
            let idx = if spec.replacement {
                let all = &by_label[label];
                if all.is_empty() {
                    return Err(Error::Partition(format!("no samples with label {label}")));
                }
                all[crng.random_range(0..all.len())]
            } else {
                pools[label].pop().ok_or_else(|| {
                    Error::Partition(format!("ran out of samples with label {label} for client {client}"))
                })?
            };
            samples.push(dataset.samples()[idx].clone());
        }
        samples.shuffle(&mut crng);
        shards.push(ClientShard { client_id: client, main_label: main, data: dataset.with_samples(samples) });
    }
    Ok(shards)
}

fn shard_labels(spec: &PartitionSpec, labels: usize, main: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
    let n = spec.shard_size;
    let mut out = Vec::with_capacity(n);
    match spec.scheme {
        PartitionScheme::Iid => out.extend((0..n).map(|_| rng.random_range(0..labels))),
        PartitionScheme::OneClass | PartitionScheme::TwoClass => {
            let peaked = (spec.q * n as f64).round() as usize;
            if spec.scheme == PartitionScheme::OneClass {
                out.extend(std::iter::repeat_n(main, peaked));
            } else {
                let second = (main + 1) % labels;
                out.extend(std::iter::repeat_n(main, peaked.div_ceil(2)));
                out.extend(std::iter::repeat_n(second, peaked / 2));
            }
            // the rest is spread evenly over all labels
            let rest = n - peaked;
            for label in 0..labels {
                out.extend(std::iter::repeat_n(label, rest / labels));
            }
            let mut extra: Vec<usize> = (0..labels).collect();
            extra.shuffle(rng);
            out.extend(extra.into_iter().take(rest % labels));
        }
        PartitionScheme::Dirichlet => {
            let gamma =
                Gamma::new(spec.dirichlet_alpha, 1.0).map_err(|e| Error::Partition(format!("dirichlet: {e}")))?;
            let mut weights: Vec<f64> = (0..labels).map(|_| gamma.sample(rng)).collect();
            if weights.iter().all(|w| *w == 0.0) {
                weights[main] = 1.0;
            }
            // the peak lands on the main label
            let peak = crate::nn::argmax(&weights);
            weights.swap(peak, main);
            out.extend((0..n).map(|_| categorical(&weights, rng)));
        }
        PartitionScheme::Normal => {
            let sigma = labels as f64 / 4.0;
            let weights: Vec<f64> = (0..labels)
                .map(|k| {
                    let d = k.abs_diff(main).min(labels - k.abs_diff(main)) as f64;
                    (-d * d / (2.0 * sigma * sigma)).exp()
                })
                .collect();
            out.extend((0..n).map(|_| categorical(&weights, rng)));
        }
    }
    Ok(out)
}

fn categorical(weights: &[f64], rng: &mut SimRng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}
