//! Data and model poisoning: trigger injection, the constrain-and-scale
//! attacker and two untargeted variants.

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::nn::{train_local, train_with_objective, LayeredModel, Objective, Shape, TrainingConfig};
use crate::rng::seeded;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Square patch stamped onto image inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PixelPattern {
    pub size: usize,
    pub value: f64,
    pub row: usize,
    pub col: usize,
    /// Number of malicious clients the patch is split across; 1 means every
    /// client stamps the whole patch.
    pub parts: usize,
}

impl Default for PixelPattern {
    fn default() -> Self {
        Self { size: 3, value: 1.0, row: 0, col: 0, parts: 1 }
    }
}

impl PixelPattern {
    /// Flat input indices covered by the patch, or by slice `part` of it.
    pub fn positions(&self, shape: Shape, part: Option<usize>) -> Result<Vec<usize>> {
        let (h, w) = if shape.height > 1 { (shape.height, shape.width) } else { (1, shape.len()) };
        let rows = if h == 1 { 1 } else { self.size };
        if self.row + rows > h || self.col + self.size > w {
            return Err(Error::Attack(format!("pixel patch does not fit a {h}x{w} input")));
        }
        let mut out = Vec::new();
        let mut k = 0;
        for r in self.row..self.row + rows {
            for c in self.col..self.col + self.size {
                let keep = part.is_none_or(|p| self.parts <= 1 || k % self.parts == p % self.parts);
                if keep {
                    // every channel gets stamped
                    for ch in 0..shape.channels.max(1) {
                        out.push((ch * h + r) * w + c);
                    }
                }
                k += 1;
            }
        }
        if shape.height <= 1 {
            out.retain(|&i| i < shape.len());
        }
        Ok(out)
    }

    pub fn apply(&self, input: &mut [f64], positions: &[usize]) {
        for &i in positions {
            input[i] = self.value;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    Pixel(PixelPattern),
    /// Every sample of `source_label` is relabelled to the target.
    LabelSwap {
        source_label: usize,
    },
    /// Samples carrying the latent attribute are relabelled to the target.
    Semantic {
        attribute_id: usize,
    },
    UntargetedRandomLabels,
    UntargetedLossMax,
}

impl Trigger {
    pub fn is_data_level(&self) -> bool {
        matches!(self, Trigger::Pixel(_) | Trigger::LabelSwap { .. } | Trigger::Semantic { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub trigger: Trigger,
    pub target_label: usize,
    /// Poison data rate: share of the shard carrying the trigger.
    #[serde(default = "default_pdr")]
    pub pdr: f64,
    /// Weight of the classification loss against the distance-to-global loss.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Multiplier applied to the update `local - global` after training.
    #[serde(default = "default_scale")]
    pub scale_factor: f64,
    /// Malicious learning rate; the benign one when unset.
    #[serde(default)]
    pub learning_rate: Option<f64>,
}

fn default_pdr() -> f64 {
    0.1
}
fn default_alpha() -> f64 {
    0.7
}
fn default_scale() -> f64 {
    1.0
}

impl AttackConfig {
    pub fn new(trigger: Trigger, target_label: usize) -> Self {
        Self {
            trigger,
            target_label,
            pdr: default_pdr(),
            alpha: default_alpha(),
            scale_factor: default_scale(),
            learning_rate: None,
        }
    }

    pub fn validate(&self, label_count: usize) -> Result<()> {
        if !(self.pdr > 0.0 && self.pdr <= 1.0) {
            return Err(Error::Attack(format!("pdr {} outside (0, 1]", self.pdr)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Attack(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.scale_factor >= 1.0) {
            return Err(Error::Attack(format!("scale_factor {} below 1", self.scale_factor)));
        }
        if self.target_label >= label_count {
            return Err(Error::Attack(format!("target label {} >= {label_count}", self.target_label)));
        }
        if let Trigger::LabelSwap { source_label } = self.trigger {
            if source_label >= label_count || source_label == self.target_label {
                return Err(Error::Attack(format!("invalid label-swap source {source_label}")));
            }
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0) {
                return Err(Error::Attack("malicious learning_rate must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Output of [`poison_dataset`].
#[derive(Debug, Clone)]
pub struct PoisonedShard {
    pub data: Dataset,
    /// Indices into `data` that carry the trigger.
    pub poisoned: Vec<usize>,
    pub trigger_testset: Dataset,
}

/// Triggered held-out samples for measuring backdoor accuracy: inputs are
/// drawn from `held_out` excluding the target label, with the full trigger
/// applied. The labels keep their original (true) values.
pub fn trigger_testset(held_out: &Dataset, cfg: &AttackConfig) -> Result<Dataset> {
    let mut out = Vec::new();
    match cfg.trigger {
        Trigger::Pixel(p) => {
            let pos = p.positions(held_out.shape(), None)?;
            for s in held_out.samples().iter().filter(|s| s.label != cfg.target_label) {
                let mut t = s.clone();
                p.apply(&mut t.input, &pos);
                out.push(t);
            }
        }
        Trigger::LabelSwap { source_label } => {
            out.extend(held_out.samples().iter().filter(|s| s.label == source_label).cloned());
        }
        Trigger::Semantic { .. } => {
            out.extend(held_out.samples().iter().filter(|s| s.attribute && s.label != cfg.target_label).cloned());
            if out.is_empty() {
                return Err(Error::Attack("held-out data lacks the semantic attribute".into()));
            }
        }
        _ => return Err(Error::Attack("untargeted attacks have no trigger set".into())),
    }
    Ok(held_out.with_samples(out))
}

/// Injects the trigger into `round(pdr * |shard|)` samples and relabels them
/// to the target. Label-swap and semantic triggers relabel every matching
/// sample already in the shard and top up from `aux` (replacing clean
/// samples) when the shard holds too few. `part` selects the patch slice for
/// distributed pixel triggers.
pub fn poison_dataset(
    shard: &Dataset,
    cfg: &AttackConfig,
    aux: &Dataset,
    part: usize,
    seed: u64,
) -> Result<PoisonedShard> {
    cfg.validate(shard.label_count())?;
    if !cfg.trigger.is_data_level() {
        return Err(Error::Attack("poison_dataset needs a data-level trigger".into()));
    }
    if shard.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = seeded(seed);
    let n = shard.len();
    let quota = ((cfg.pdr * n as f64).round() as usize).clamp(1, n);
    let mut samples = shard.samples().to_vec();
    let mut poisoned = Vec::new();

    match cfg.trigger {
        Trigger::Pixel(p) => {
            let pos = p.positions(shard.shape(), Some(part))?;
            let mut chosen = index::sample(&mut rng, n, quota).into_vec();
            chosen.sort_unstable();
            for i in chosen {
                p.apply(&mut samples[i].input, &pos);
                samples[i].label = cfg.target_label;
                poisoned.push(i);
            }
        }
        Trigger::LabelSwap { source_label } => {
            top_up(&mut samples, &mut poisoned, aux, quota, cfg.target_label, &mut rng, |s| s.label == source_label)?;
        }
        Trigger::Semantic { .. } => {
            if !shard.has_attribute() && !aux.has_attribute() {
                return Err(Error::Attack("dataset lacks the semantic attribute".into()));
            }
            let target = cfg.target_label;
            top_up(&mut samples, &mut poisoned, aux, quota, target, &mut rng, |s| s.attribute && s.label != target)?;
        }
        _ => unreachable!("checked above"),
    }
    Ok(PoisonedShard { data: shard.with_samples(samples), poisoned, trigger_testset: trigger_testset(aux, cfg)? })
}

fn top_up(
    samples: &mut [Sample],
    poisoned: &mut Vec<usize>,
    aux: &Dataset,
    quota: usize,
    target: usize,
    rng: &mut crate::rng::SimRng,
    matches: impl Fn(&Sample) -> bool,
) -> Result<()> {
    for (i, s) in samples.iter_mut().enumerate() {
        if matches(s) {
            s.label = target;
            poisoned.push(i);
        }
    }
    if poisoned.len() >= quota {
        return Ok(());
    }
    let donors: Vec<&Sample> = aux.samples().iter().filter(|s| matches(s)).collect();
    if donors.is_empty() {
        return Err(Error::Attack("no samples matching the trigger to inject".into()));
    }
    let mut clean: Vec<usize> = (0..samples.len()).filter(|i| !poisoned.contains(i)).collect();
    clean.shuffle(rng);
    for i in clean.into_iter().take(quota - poisoned.len()) {
        let donor = donors[rng.random_range(0..donors.len())];
        samples[i] = Sample { label: target, ..donor.clone() };
        poisoned.push(i);
    }
    poisoned.sort_unstable();
    Ok(())
}

/// Share of `trigger_set` that `model` assigns to `target`.
pub fn backdoor_accuracy(model: &LayeredModel, trigger_set: &Dataset, target: usize) -> Result<f64> {
    if trigger_set.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for s in trigger_set.samples() {
        if model.predict(&s.input)? == target {
            hits += 1;
        }
    }
    Ok(hits as f64 / trigger_set.len() as f64)
}

/// A trained poisoned model and its backdoor accuracy on the attacker's own
/// trigger set.
#[derive(Debug, Clone)]
pub struct MaliciousUpdate {
    pub model: LayeredModel,
    pub local_ba: f64,
}

/// Constrain-and-scale training: minimises
/// `alpha * CE + (1 - alpha) * ||local - global||`, then scales the update by
/// `scale_factor`.
pub fn train_malicious(
    global: &LayeredModel,
    poisoned: &PoisonedShard,
    cfg: &AttackConfig,
    tcfg: &TrainingConfig,
) -> Result<MaliciousUpdate> {
    cfg.validate(global.output_classes())?;
    let tcfg = TrainingConfig { learning_rate: cfg.learning_rate.unwrap_or(tcfg.learning_rate), ..*tcfg };
    let mut model =
        train_with_objective(global, &poisoned.data, &tcfg, Objective::Anchored { alpha: cfg.alpha, anchor: global })?;
    if cfg.scale_factor != 1.0 {
        let g = global.flat_params();
        let scaled: Vec<f64> =
            model.flat_params().iter().zip(&g).map(|(l, g)| g + cfg.scale_factor * (l - g)).collect();
        model.set_flat_params(&scaled)?;
    }
    let local_ba = backdoor_accuracy(&model, &poisoned.trigger_testset, cfg.target_label)?;
    Ok(MaliciousUpdate { model, local_ba })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UntargetedVariant {
    RandomLabels,
    LossMax,
}

impl FromStr for UntargetedVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_labels" => Ok(Self::RandomLabels),
            "loss_max" => Ok(Self::LossMax),
            other => Err(Error::Attack(format!("unknown untargeted variant {other:?}"))),
        }
    }
}

/// Untargeted poisoning: train on uniformly shuffled labels, or ascend the
/// loss.
pub fn train_untargeted(
    global: &LayeredModel,
    shard: &Dataset,
    variant: UntargetedVariant,
    tcfg: &TrainingConfig,
) -> Result<LayeredModel> {
    match variant {
        UntargetedVariant::RandomLabels => {
            let mut rng = seeded(tcfg.seed ^ 0x5eed_1abe);
            let labels = shard.label_count();
            let samples =
                shard.samples().iter().map(|s| Sample { label: rng.random_range(0..labels), ..s.clone() }).collect();
            train_local(global, &shard.with_samples(samples), tcfg)
        }
        UntargetedVariant::LossMax => train_with_objective(global, shard, tcfg, Objective::Ascent),
    }
}
