mod common;

use common::small_config;
use crowdguard_core::config::{ExperimentConfig, RoundConfig};
use crowdguard_core::nn::{load_model, save_model, LayeredModel, Shape};
use crowdguard_core::orchestrator::{
    assign_attacks, federated_average, finish_round, initial_model, prepare_data, run_experiment, train_locals,
    RoundContext,
};
use crowdguard_core::report::{write_rounds_csv, write_rounds_json, ROUND_CSV_HEADER};
use proptest::prelude::*;

#[test]
fn same_seed_same_run() {
    let cfg = small_config("pixel");
    let (a, ga) = run_experiment(&cfg, 3).unwrap();
    let (b, gb) = run_experiment(&cfg, 3).unwrap();
    assert_eq!(ga, gb);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.ma.to_bits(), y.ma.to_bits());
        assert_eq!(x.ba.to_bits(), y.ba.to_bits());
        assert_eq!(x.accepted, y.accepted);
        assert_eq!(x.votes, y.votes);
    }
    let (_, gc) = run_experiment(&cfg, 4).unwrap();
    assert_ne!(ga, gc);
}

#[test]
fn reports_carry_ground_truth() {
    let cfg = small_config("label-swap");
    let (reports, _) = run_experiment(&cfg, 0).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(!reports[0].attack_active && reports[0].poisoned.is_empty());
    assert!(reports[1].attack_active);
    assert_eq!(reports[1].poisoned, vec![4, 5]);
    assert_eq!(reports[1].votes.len(), 6);
    assert!(reports[1].local_ba.is_some());
    for r in &reports {
        assert!((0.0..=1.0).contains(&r.ma) && (0.0..=1.0).contains(&r.ba));
    }
}

fn with_params(values: &[f64]) -> LayeredModel {
    let mut m = LayeredModel::mlp(Shape::flat(2), [2, 2], 2, 0).unwrap();
    m.set_flat_params(values).unwrap();
    m
}

proptest! {
    #[test]
    fn unit_rate_average_is_the_plain_mean(
        params in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 18), 1..6),
        start in prop::collection::vec(-10.0..10.0f64, 18),
    ) {
        let global = with_params(&start);
        let locals: Vec<LayeredModel> = params.iter().map(|p| with_params(p)).collect();
        let refs: Vec<&LayeredModel> = locals.iter().collect();
        let out = federated_average(&global, &refs, 1.0).unwrap().flat_params();
        for (k, v) in out.iter().enumerate() {
            let mean = params.iter().map(|p| p[k]).sum::<f64>() / params.len() as f64;
            prop_assert!((v - mean).abs() < 1e-12);
        }
    }
}

/// With every model accepted, the defended aggregate is the undefended one,
/// bit for bit; otherwise it is the average of exactly the accepted models.
#[test]
fn filtering_only_removes_rejected_models() {
    let cfg = small_config("benign");
    let data = prepare_data(&cfg, 1).unwrap();
    let global = initial_model(&cfg, &data, 1).unwrap();
    let assignment = assign_attacks(&cfg.round, 0);
    let off = RoundConfig { defense_enabled: false, ..cfg.round };
    let ctx = |config| RoundContext {
        round: 0,
        data: &data,
        attacks: &cfg.attacks,
        assignment: &assignment,
        training: &cfg.training,
        config,
        defense: &cfg.defense,
    };
    let (locals, bas) = train_locals(&global, &ctx(&cfg.round)).unwrap();
    let (plain, r_off) = finish_round(&global, &locals, &bas, &ctx(&off)).unwrap();
    let (defended, r_on) = finish_round(&global, &locals, &bas, &ctx(&cfg.round)).unwrap();
    assert_eq!(r_off.accepted, (0..6).collect::<Vec<_>>());
    if r_on.accepted.len() == 6 {
        assert_eq!(defended, plain);
    } else {
        let chosen: Vec<&LayeredModel> = r_on.accepted.iter().map(|&i| &locals[i]).collect();
        assert_eq!(defended, federated_average(&global, &chosen, 1.0).unwrap());
    }
}

#[test]
fn checkpoint_round_trip() {
    let cfg = small_config("pixel");
    let (_, model) = run_experiment(&ExperimentConfig { rounds: 1, ..cfg }, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    std::fs::write(&path, "{\"format\": \"nope\"}").unwrap();
    assert!(load_model(&path).is_err());
}

#[test]
fn config_round_trips_through_toml_and_json() {
    let cfg = small_config("label-swap");
    let toml_text = toml::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_str_any(&toml_text).unwrap(), cfg);
    let json_text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_str_any(&json_text).unwrap(), cfg);
    assert_eq!(cfg.hash(), cfg.clone().hash());
    assert_ne!(cfg.hash(), small_config("pixel").hash());
    assert!(ExperimentConfig::from_str_any("[round]\nbogus = 1\n").is_err());
}

#[test]
fn round_reports_serialize() {
    let cfg = small_config("pixel");
    let (reports, _) = run_experiment(&cfg, 0).unwrap();
    let mut csv = Vec::new();
    write_rounds_csv(&mut csv, &cfg.hash(), &reports).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], ROUND_CSV_HEADER);
    assert_eq!(lines.len(), 3);
    let columns = ROUND_CSV_HEADER.split(',').count();
    assert!(lines[1..].iter().all(|l| l.split(',').count() == columns && l.starts_with(&cfg.hash())));

    let mut json = Vec::new();
    write_rounds_json(&mut json, &cfg.hash(), 0, &cfg, &reports).unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert_eq!(doc["rounds"].as_array().unwrap().len(), 2);
    assert_eq!(doc["config_hash"], cfg.hash());
}
