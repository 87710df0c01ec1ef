//! Federated rounds: local training, validation, vote aggregation, filtered
//! averaging and metrics.

use crate::attacks::{
    backdoor_accuracy, poison_dataset, train_malicious, train_untargeted, trigger_testset, AttackConfig, Trigger,
    UntargetedVariant,
};
use crate::config::{
    Aggregation, DataSource, DefenseConfig, ExperimentConfig, MaliciousVoting, ModelConfig, RoundConfig,
};
use crate::data::{gen_synthetic, load_idx, partition, ClientShard, Dataset};
use crate::defense::{
    compute_hlbim_multi, detection_metrics, prune_vote, DetectionMetrics, DistanceMode, HlbimMatrix, PruneTrace,
    VoteMatrix,
};
use crate::error::{Error, Result};
use crate::nn::{LayeredModel, Metric, TrainingConfig};
use crate::rng::{derive_seed, seeded};
use rand::seq::index;
use serde::Serialize;

const TAG_TRAIN: u64 = 1;
const TAG_POISON: u64 = 2;
const TAG_VALIDATE: u64 = 3;
const TAG_SELECT: u64 = 4;

/// `G + delta * mean(L_i - G)`, every accepted model weighted equally.
pub fn federated_average(global: &LayeredModel, accepted: &[&LayeredModel], delta: f64) -> Result<LayeredModel> {
    weighted_average(global, accepted, &vec![1.0; accepted.len()], delta)
}

/// `G + delta * sum(w_i (L_i - G))` with `w_i` proportional to `sizes`.
pub fn weighted_average(
    global: &LayeredModel,
    accepted: &[&LayeredModel],
    sizes: &[f64],
    delta: f64,
) -> Result<LayeredModel> {
    if accepted.is_empty() {
        return Err(Error::RoundRejected);
    }
    if sizes.len() != accepted.len() || sizes.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::InvalidModel("one non-negative size per accepted model required".into()));
    }
    let total: f64 = sizes.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidModel("sizes sum to zero".into()));
    }
    if accepted.iter().any(|m| !m.same_architecture(global)) {
        return Err(Error::ArchitectureMismatch);
    }
    let g = global.flat_params();
    let mut mean = vec![0.0; g.len()];
    for (m, &w) in accepted.iter().zip(sizes) {
        for (acc, p) in mean.iter_mut().zip(m.flat_params()) {
            *acc += w * p;
        }
    }
    for v in &mut mean {
        *v /= total;
    }
    if delta != 1.0 {
        for (v, g) in mean.iter_mut().zip(&g) {
            *v = g + delta * (*v - g);
        }
    }
    let mut out = global.clone();
    out.set_flat_params(&mean)?;
    Ok(out)
}

fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Client data plus the clean evaluation set and the attacker's pool.
#[derive(Debug, Clone)]
pub struct FederatedData {
    pub shards: Vec<ClientShard>,
    pub test: Dataset,
    pub aux: Dataset,
}

/// Attack index per client: the last `round(pmr * n)` clients are malicious
/// and cycle through the configured attacks.
pub fn assign_attacks(round: &RoundConfig, attack_count: usize) -> Vec<Option<usize>> {
    let k = if attack_count == 0 { 0 } else { round.malicious_count() };
    let first = round.clients - k;
    (0..round.clients).map(|i| (i >= first).then(|| (i - first) % attack_count)).collect()
}

/// Everything a round needs besides the global model.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub round: usize,
    pub data: &'a FederatedData,
    pub attacks: &'a [AttackConfig],
    pub assignment: &'a [Option<usize>],
    pub training: &'a TrainingConfig,
    pub config: &'a RoundConfig,
    pub defense: &'a DefenseConfig,
}

impl RoundContext<'_> {
    pub fn attack_active(&self) -> bool {
        !self.attacks.is_empty() && self.round >= self.config.start_round
    }

    /// Ground truth: which submitted models are poisoned this round.
    pub fn poisoned(&self) -> Vec<bool> {
        let active = self.attack_active();
        self.assignment.iter().map(|a| active && a.is_some()).collect()
    }

    fn seed(&self, tags: &[u64]) -> u64 {
        let mut all = vec![self.round as u64];
        all.extend_from_slice(tags);
        derive_seed(self.config.seed, &all)
    }
}

/// Local models of all clients, plus each attacker's backdoor accuracy on
/// its own trigger set.
pub fn train_locals(global: &LayeredModel, ctx: &RoundContext) -> Result<(Vec<LayeredModel>, Vec<Option<f64>>)> {
    let n = ctx.config.clients;
    if ctx.data.shards.len() != n || ctx.assignment.len() != n {
        return Err(Error::Config(format!("{n} clients but {} shards", ctx.data.shards.len())));
    }
    let poisoned = ctx.poisoned();
    let out = par_map(n, |i| {
        let tcfg = TrainingConfig { seed: ctx.seed(&[TAG_TRAIN, i as u64]), ..*ctx.training };
        let shard = &ctx.data.shards[i].data;
        if !poisoned[i] {
            return Ok((crate::nn::train_local(global, shard, &tcfg)?, None));
        }
        let a = ctx.assignment[i].expect("poisoned clients carry an attack");
        let cfg = &ctx.attacks[a];
        match cfg.trigger {
            Trigger::UntargetedRandomLabels => {
                Ok((train_untargeted(global, shard, UntargetedVariant::RandomLabels, &tcfg)?, None))
            }
            Trigger::UntargetedLossMax => {
                Ok((train_untargeted(global, shard, UntargetedVariant::LossMax, &tcfg)?, None))
            }
            _ => {
                // rank within the attack group selects the distributed patch slice
                let rank = ctx.assignment[..i].iter().filter(|x| **x == Some(a)).count();
                let p = poison_dataset(shard, cfg, &ctx.data.aux, rank, ctx.seed(&[TAG_POISON, i as u64]))?;
                let up = train_malicious(global, &p, cfg, &tcfg)?;
                Ok((up.model, Some(up.local_ba)))
            }
        }
    })?;
    Ok(out.into_iter().unzip())
}

/// Inspection results of one validator.
#[derive(Debug, Clone, Serialize)]
pub struct ValidatorTrace {
    pub validator: usize,
    pub cosine: PruneTrace,
    pub euclidean: PruneTrace,
    pub cosine_hlbim: HlbimMatrix,
    pub euclidean_hlbim: HlbimMatrix,
}

/// Samples a validator feeds through the models.
pub fn validation_shard(ctx: &RoundContext, validator: usize) -> Dataset {
    let shard = &ctx.data.shards[validator].data;
    match ctx.defense.validation_samples {
        Some(k) if k < shard.len() => {
            let mut rng = seeded(ctx.seed(&[TAG_VALIDATE, validator as u64]));
            let mut idx = index::sample(&mut rng, shard.len(), k).into_vec();
            idx.sort_unstable();
            shard.with_samples(idx.into_iter().map(|i| shard.samples()[i].clone()).collect())
        }
        _ => shard.clone(),
    }
}

/// Clients acting as validators this round, in ascending order.
pub fn select_validators(ctx: &RoundContext) -> Vec<usize> {
    let n = ctx.config.clients;
    match ctx.defense.validators {
        Some(v) if v < n => {
            let mut rng = seeded(ctx.seed(&[TAG_SELECT]));
            let mut ids = index::sample(&mut rng, n, v).into_vec();
            ids.sort_unstable();
            ids
        }
        _ => (0..n).collect(),
    }
}

/// Honest validation by every selected validator. The attack assignment is
/// not an input.
pub fn validate_locals(
    global: &LayeredModel,
    locals: &[LayeredModel],
    validators: &[usize],
    ctx: &RoundContext,
) -> Result<(VoteMatrix, Vec<ValidatorTrace>)> {
    let out = par_map(validators.len(), |k| {
        let j = validators[k];
        let shard = validation_shard(ctx, j);
        let mut m = compute_hlbim_multi(
            global,
            locals,
            j,
            &shard,
            &[Metric::Cosine, Metric::Euclidean],
            DistanceMode::Relative,
        )?;
        let euclidean_hlbim = m.pop().expect("two metrics");
        let cosine_hlbim = m.pop().expect("two metrics");
        let (bits, cosine, euclidean) = prune_vote(&cosine_hlbim, &euclidean_hlbim, j)?;
        Ok((bits, ValidatorTrace { validator: j, cosine, euclidean, cosine_hlbim, euclidean_hlbim }))
    })?;
    Ok(out.into_iter().unzip())
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundReport {
    pub round: usize,
    pub seed: u64,
    pub attack_active: bool,
    pub defense_enabled: bool,
    /// Main-task accuracy of the new global model.
    pub ma: f64,
    /// Backdoor accuracy of the new global model; 0 without a targeted attack.
    pub ba: f64,
    #[serde(flatten)]
    pub detection: DetectionMetrics,
    pub accepted: Vec<usize>,
    pub poisoned: Vec<usize>,
    /// The global model was kept because nothing was accepted.
    pub skipped: bool,
    /// Mean backdoor accuracy of the attackers' own models.
    pub local_ba: Option<f64>,
    pub validators: Vec<usize>,
    pub votes: VoteMatrix,
    #[serde(skip)]
    pub traces: Vec<ValidatorTrace>,
}

/// Backdoor accuracy averaged over the targeted attacks; 0 when there are none.
pub fn global_backdoor_accuracy(model: &LayeredModel, test: &Dataset, attacks: &[AttackConfig]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for a in attacks.iter().filter(|a| a.trigger.is_data_level()) {
        sum += backdoor_accuracy(model, &trigger_testset(test, a)?, a.target_label)?;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// One full round starting from `global`.
pub fn run_round(global: &LayeredModel, ctx: &RoundContext) -> Result<(LayeredModel, RoundReport)> {
    let (locals, local_bas) = train_locals(global, ctx)?;
    finish_round(global, &locals, &local_bas, ctx)
}

/// Validation, filtering, aggregation and metrics for already-trained locals.
pub fn finish_round(
    global: &LayeredModel,
    locals: &[LayeredModel],
    local_bas: &[Option<f64>],
    ctx: &RoundContext,
) -> Result<(LayeredModel, RoundReport)> {
    let n = locals.len();
    let poisoned = ctx.poisoned();
    let (decision, validators, votes, traces) = if ctx.config.defense_enabled {
        let validators = select_validators(ctx);
        let (mut votes, traces) = validate_locals(global, locals, &validators, ctx)?;
        if ctx.attack_active() {
            for (row, &j) in votes.iter_mut().zip(&validators) {
                if ctx.assignment[j].is_some() {
                    match ctx.defense.malicious_votes {
                        MaliciousVoting::Honest => {}
                        MaliciousVoting::AcceptAll => row.iter_mut().for_each(|b| *b = true),
                        MaliciousVoting::Invert => {
                            row.iter_mut().for_each(|b| *b = !*b);
                            row[j] = true;
                        }
                    }
                }
            }
        }
        let decision = ctx.defense.rule.apply(&votes)?;
        (decision, validators, votes, traces)
    } else {
        (vec![true; n], Vec::new(), Vec::new(), Vec::new())
    };

    let accepted: Vec<usize> = (0..n).filter(|&i| decision[i]).collect();
    let chosen: Vec<&LayeredModel> = accepted.iter().map(|&i| &locals[i]).collect();
    let (new_global, skipped) = if chosen.is_empty() {
        (global.clone(), true)
    } else {
        let g = match ctx.defense.aggregation {
            Aggregation::FedAvg => federated_average(global, &chosen, ctx.config.global_lr)?,
            Aggregation::Weighted => {
                let sizes: Vec<f64> = accepted.iter().map(|&i| ctx.data.shards[i].data.len() as f64).collect();
                weighted_average(global, &chosen, &sizes, ctx.config.global_lr)?
            }
        };
        (g, false)
    };

    let bas: Vec<f64> = local_bas.iter().flatten().copied().collect();
    let report = RoundReport {
        round: ctx.round,
        seed: ctx.config.seed,
        attack_active: ctx.attack_active(),
        defense_enabled: ctx.config.defense_enabled,
        ma: new_global.accuracy(&ctx.data.test)?,
        ba: global_backdoor_accuracy(&new_global, &ctx.data.test, ctx.attacks)?,
        detection: detection_metrics(&poisoned, &decision),
        accepted,
        poisoned: (0..n).filter(|&i| poisoned[i]).collect(),
        skipped,
        local_ba: (!bas.is_empty()).then(|| bas.iter().sum::<f64>() / bas.len() as f64),
        validators,
        votes,
        traces,
    };
    Ok((new_global, report))
}

/// Generates or loads the data, carves out the test and attacker pools and
/// partitions the rest among the clients.
pub fn prepare_data(config: &ExperimentConfig, seed: u64) -> Result<FederatedData> {
    let full = match config.dataset.source {
        DataSource::Synthetic => {
            let spec = crate::data::SyntheticSpec {
                seed: derive_seed(config.dataset.synthetic.seed, &[seed]),
                ..config.dataset.synthetic
            };
            gen_synthetic(&spec)?
        }
        DataSource::Idx => {
            let p = config.dataset.idx.as_ref().ok_or_else(|| Error::Config("dataset.idx is required".into()))?;
            load_idx(&p.images, &p.labels)?
        }
    };
    let (rest, test) = full.split_stratified(config.dataset.test_per_label, derive_seed(seed, &[10]));
    let (pool, aux) = rest.split_stratified(config.dataset.aux_per_label, derive_seed(seed, &[11]));
    let spec = crate::data::PartitionSpec { seed: derive_seed(config.partition.seed, &[seed]), ..config.partition };
    Ok(FederatedData { shards: partition(&pool, &spec)?, test, aux })
}

pub fn initial_model(config: &ExperimentConfig, data: &FederatedData, seed: u64) -> Result<LayeredModel> {
    let shape = data.test.shape();
    let classes = data.test.label_count();
    let s = derive_seed(seed, &[12]);
    match config.model {
        ModelConfig::Mlp { hidden } => LayeredModel::mlp(shape, hidden, classes, s),
        ModelConfig::Cnn => LayeredModel::cnn(shape, classes, s),
    }
}

/// Runs `config.rounds` rounds for one seed, returning one report per round
/// and the final global model.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<(Vec<RoundReport>, LayeredModel)> {
    config.validate()?;
    let data = prepare_data(config, seed)?;
    let mut global = initial_model(config, &data, seed)?;
    let round_cfg = RoundConfig { seed, ..config.round };
    let assignment = assign_attacks(&round_cfg, config.attacks.len());
    let mut reports = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let ctx = RoundContext {
            round,
            data: &data,
            attacks: &config.attacks,
            assignment: &assignment,
            training: &config.training,
            config: &round_cfg,
            defense: &config.defense,
        };
        let (next, report) = run_round(&global, &ctx)?;
        global = next;
        reports.push(report);
    }
    Ok((reports, global))
}
