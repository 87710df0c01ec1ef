//! Experiment configuration: TOML (or JSON) files, defaults and presets.

use crate::attacks::{AttackConfig, Trigger};
use crate::data::{PartitionSpec, SyntheticSpec};
use crate::defense::AggregationRule;
use crate::error::{Error, Result};
use crate::nn::TrainingConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Idx,
}

/// IDX image and label files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxPaths {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    pub synthetic: SyntheticSpec,
    pub idx: Option<IdxPaths>,
    /// Held-out samples per label for main-task and backdoor accuracy.
    pub test_per_label: usize,
    /// Samples per label reserved for the attacker's auxiliary pool.
    pub aux_per_label: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            synthetic: SyntheticSpec { per_class: 3000, ..SyntheticSpec::default() },
            idx: None,
            test_per_label: 100,
            aux_per_label: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Mlp { hidden: [usize; 2] },
    Cnn,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Mlp { hidden: [32, 32] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundConfig {
    /// Clients per round; all of them train and, by default, validate.
    pub clients: usize,
    /// Share of the clients controlled by the adversary.
    pub pmr: f64,
    pub global_lr: f64,
    pub defense_enabled: bool,
    /// First round in which the adversary poisons.
    pub start_round: usize,
    pub seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self { clients: 20, pmr: 0.45, global_lr: 1.0, defense_enabled: true, start_round: 3, seed: 0 }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::Config("round.clients must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.pmr) {
            return Err(Error::Config(format!("round.pmr = {} must lie in [0, 0.5)", self.pmr)));
        }
        if !(self.global_lr > 0.0 && self.global_lr.is_finite()) {
            return Err(Error::Config("round.global_lr must be positive".into()));
        }
        Ok(())
    }

    /// Number of malicious clients, `round(pmr * clients)`.
    pub fn malicious_count(&self) -> usize {
        (self.pmr * self.clients as f64).round() as usize
    }
}

/// How malicious validators vote while the attack is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaliciousVoting {
    Honest,
    #[default]
    AcceptAll,
    /// Flip the honest vote.
    Invert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Uniform averaging of accepted updates.
    #[default]
    FedAvg,
    /// Averaging weighted by reported shard sizes.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseConfig {
    /// Validators drawn per round; every client when unset.
    pub validators: Option<usize>,
    /// Shard samples each validator feeds through the models; all when unset.
    pub validation_samples: Option<usize>,
    pub malicious_votes: MaliciousVoting,
    pub rule: AggregationRule,
    pub aggregation: Aggregation,
    /// Stands in for enclave attestation; has no effect on the computation.
    pub trusted_execution: bool,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            validators: None,
            validation_samples: Some(256),
            malicious_votes: MaliciousVoting::AcceptAll,
            rule: AggregationRule::Stacked,
            aggregation: Aggregation::FedAvg,
            trusted_execution: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub partition: PartitionSpec,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    /// Malicious clients are spread round-robin over these attacks.
    pub attacks: Vec<AttackConfig>,
    pub round: RoundConfig,
    pub defense: DefenseConfig,
    /// Total rounds, warmup included.
    pub rounds: usize,
    pub output_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            partition: PartitionSpec { shard_size: 1024, ..PartitionSpec::default() },
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            attacks: vec![AttackConfig::new(Trigger::Semantic { attribute_id: 0 }, 0)],
            round: RoundConfig::default(),
            defense: DefenseConfig::default(),
            rounds: 4,
            output_dir: None,
            seeds: vec![0],
        }
    }
}

pub const PRESETS: [&str; 4] = ["paper-default-scaled", "label-swap", "pixel", "benign"];

impl ExperimentConfig {
    /// Named starting points. `paper-default-scaled` keeps the reference
    /// hyper-parameters (PDR 0.1, alpha 0.7, PMR 0.45, q 0, LR 0.01, 10 epochs,
    /// batch 64, 20 clients) on synthetic data.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::default();
        match name {
            "paper-default-scaled" => Ok(base),
            "label-swap" => Ok(Self {
                attacks: vec![AttackConfig {
                    pdr: 0.5,
                    ..AttackConfig::new(Trigger::LabelSwap { source_label: 7 }, 1)
                }],
                ..base
            }),
            "pixel" => Ok(Self { attacks: vec![AttackConfig::new(Trigger::Pixel(Default::default()), 0)], ..base }),
            "benign" => Ok(Self { attacks: Vec::new(), round: RoundConfig { pmr: 0.0, ..base.round }, ..base }),
            other => Err(Error::Config(format!("unknown preset {other:?}; known: {}", PRESETS.join(", ")))),
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn from_str_any(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.round.validate()?;
        self.training.validate()?;
        self.partition.validate()?;
        if self.partition.client_count != self.round.clients {
            return Err(Error::Config(format!(
                "partition.client_count ({}) differs from round.clients ({})",
                self.partition.client_count, self.round.clients
            )));
        }
        let labels = match self.dataset.source {
            DataSource::Synthetic => self.dataset.synthetic.classes,
            DataSource::Idx => {
                let paths = self.dataset.idx.as_ref().ok_or_else(|| Error::Config("dataset.idx is required".into()))?;
                for p in [&paths.images, &paths.labels] {
                    if !p.exists() {
                        return Err(Error::Config(format!("file {} does not exist", p.display())));
                    }
                }
                10
            }
        };
        for a in &self.attacks {
            a.validate(labels)?;
        }
        if self.round.malicious_count() > 0 && self.attacks.is_empty() {
            return Err(Error::Config("pmr > 0 needs at least one attack".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if let Some(v) = self.defense.validators {
            if v == 0 || v > self.round.clients {
                return Err(Error::Config(format!("defense.validators = {v} outside 1..={}", self.round.clients)));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_str_any(&text)
}
