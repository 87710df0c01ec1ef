#![allow(dead_code)]

pub mod oracles;

use crowdguard_core::config::ExperimentConfig;

/// Six clients, two of them malicious, small shards and one local epoch.
pub fn small_config(preset: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(preset).unwrap();
    cfg.dataset.synthetic.per_class = 200;
    cfg.dataset.test_per_label = 20;
    cfg.dataset.aux_per_label = 20;
    cfg.round.clients = 6;
    cfg.partition.client_count = 6;
    cfg.partition.shard_size = 128;
    if !cfg.attacks.is_empty() {
        cfg.round.pmr = 0.34;
    }
    cfg.round.start_round = 1;
    cfg.training.epochs = 1;
    cfg.defense.validation_samples = Some(64);
    cfg.rounds = 2;
    cfg
}

/// Global outputs per sample and layer, local outputs per model, and labels.
pub type HandDlos = (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<Vec<f64>>>>, Vec<usize>);

const GLOBAL: [f64; 2] = [1.0, -1.0];
const DIR: [f64; 2] = [0.6, 0.8];

/// A layer output exactly `d` away from the global output in Euclidean terms.
fn at(d: f64) -> Vec<f64> {
    vec![GLOBAL[0] + d * DIR[0], GLOBAL[1] + d * DIR[1]]
}

/// Three models, four samples (labels 0, 0, 1, 1), two layers. Entry
/// `[m][s] = (d_layer0, d_layer1)`.
const DISTANCES: [[(f64, f64); 4]; 3] = [
    [(1.0, 2.0), (2.0, 1.0), (1.0, 4.0), (0.5, 1.0)],
    [(3.0, 2.0), (1.0, 3.0), (2.0, 2.0), (1.0, 0.5)],
    [(0.5, 6.0), (4.0, 1.0), (1.0, 8.0), (1.5, 3.0)],
];

pub fn hand_dlos() -> HandDlos {
    let global = vec![vec![GLOBAL.to_vec(), GLOBAL.to_vec()]; 4];
    let locals = DISTANCES.iter().map(|model| model.iter().map(|&(a, b)| vec![at(a), at(b)]).collect()).collect();
    (global, locals, vec![0, 0, 1, 1])
}

/// Relative HLBIM of the hand case for validator 0, columns
/// `(0,0), (0,1), (1,0), (1,1)`.
pub const HAND_EXPECTED: [[f64; 4]; 3] = [[0.0, 0.0, 0.0, 0.0], [1.875, 2.0, 1.0, -0.25], [0.375, 2.0, 2.0, 2.5]];
