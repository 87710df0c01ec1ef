//! HLBIM identities, pruning behaviour and vote aggregation.

mod common;

use common::{hand_dlos, HAND_EXPECTED};
use crowdguard_core::defense::{
    ablation_table, aggregate_votes, hlbim_from_dlos, prune_metric, prune_vote, scaled_ratio, significance,
    AggregationRule, DistanceMode, HlbimMatrix,
};
use crowdguard_core::nn::Metric;
use proptest::prelude::*;

#[test]
fn hand_computed_three_model_matrix() {
    let (global, locals, labels) = hand_dlos();
    let h = hlbim_from_dlos(&global, &locals, &labels, 0, Metric::Euclidean, DistanceMode::Relative).unwrap();
    assert_eq!(h.columns, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    // model 1, label 0 layer 0: r = 3 -> 4 and r = 0.5 -> -0.25, mean 1.875
    for (row, want) in h.values.iter().zip(HAND_EXPECTED) {
        for (got, w) in row.iter().zip(want) {
            assert!((got - w).abs() < 1e-12, "{got} vs {w}");
        }
    }
}

#[test]
fn absolute_mode_keeps_raw_distances() {
    let (global, locals, labels) = hand_dlos();
    let h = hlbim_from_dlos(&global, &locals, &labels, 0, Metric::Euclidean, DistanceMode::Absolute).unwrap();
    // model 2, label 1, layer 1: mean of 8 and 3
    assert!((h.values[2][3] - 5.5).abs() < 1e-12);
}

#[test]
fn scaled_ratio_spot_values() {
    assert_eq!(scaled_ratio(3.0), 4.0);
    assert_eq!(scaled_ratio(0.5), -0.25);
    assert_eq!(scaled_ratio(1.0), 0.0);
}

#[test]
fn absent_labels_contribute_no_columns() {
    let (global, locals, _) = hand_dlos();
    let h = hlbim_from_dlos(&global, &locals, &[3, 3, 7, 3], 1, Metric::Cosine, DistanceMode::Relative).unwrap();
    assert_eq!(h.columns, vec![(3, 0), (3, 1), (7, 0), (7, 1)]);
    assert!(h.values[1].iter().all(|&v| v == 0.0));
}

#[test]
fn malformed_inputs_are_rejected() {
    let (global, locals, labels) = hand_dlos();
    assert!(hlbim_from_dlos(&global, &locals, &labels, 3, Metric::Cosine, DistanceMode::Relative).is_err());
    assert!(hlbim_from_dlos(&global, &locals, &labels[..3], 0, Metric::Cosine, DistanceMode::Relative).is_err());
    assert!(hlbim_from_dlos(&[], &[], &[], 0, Metric::Cosine, DistanceMode::Relative).is_err());
}

fn one_column(values: &[f64], own: usize) -> HlbimMatrix {
    HlbimMatrix {
        metric: Metric::Cosine,
        validator_index: own,
        columns: vec![(0, 0)],
        values: values.iter().map(|&v| vec![v]).collect(),
    }
}

/// Eleven benign scores spread symmetrically plus three groups of three
/// poisoned models at decreasing distance, pruned one group per round.
#[test]
fn shifted_groups_are_pruned_over_three_rounds() {
    let mut values: Vec<f64> = (0..11).map(|i| (i as f64 - 5.0) * 0.1).collect();
    values.extend([100.0, 100.5, 101.0, 30.0, 30.5, 31.0, 10.0, 10.5, 11.0]);
    let trace = prune_metric(&one_column(&values, 0)).unwrap();
    let sig: Vec<bool> = trace.iterations.iter().map(|it| it.verdict.significant).collect();
    assert_eq!(sig, vec![true, true, true, false]);
    assert_eq!(trace.iterations[0].pruned, vec![11, 12, 13]);
    assert_eq!(trace.iterations[1].pruned, vec![14, 15, 16]);
    assert_eq!(trace.iterations[2].pruned, vec![17, 18, 19]);
    assert_eq!(trace.pruned(), (11..20).collect::<Vec<_>>());
}

#[test]
fn ten_sigma_row_is_pruned_in_one_iteration() {
    let mut values: Vec<f64> = (0..12).map(|i| ((i * 7) % 12) as f64 / 12.0 - 0.5).collect();
    let sd = (values.iter().map(|v| v * v).sum::<f64>() / 12.0).sqrt();
    values.push(10.0 * sd);
    let trace = prune_metric(&one_column(&values, 0)).unwrap();
    assert_eq!(trace.iterations[0].pruned, vec![12]);
    assert_eq!(trace.pruned(), vec![12]);
}

#[test]
fn own_row_survives_in_the_vote() {
    let mut values = vec![0.0, 0.1, -0.1, 0.05, -0.05, 0.02];
    values[3] = 50.0;
    let m = one_column(&values, 3);
    let (bits, _, _) = prune_vote(&m, &m, 3).unwrap();
    assert!(bits[3]);
}

#[test]
fn symmetric_scores_are_not_significant() {
    let v = significance(&[-3.0, -1.0, 1.0, 3.0, -2.0, 2.0]);
    assert_eq!((v.t_p, v.levene_p, v.ks_p), (1.0, 1.0, 1.0));
    assert!(significance(&[0.0, 0.0, 0.0, 0.0, 0.0, 9.0]).three_sigma_outlier);
}

#[test]
fn identical_votes_pass_through() {
    let v = vec![true, false, true, true, false];
    assert_eq!(aggregate_votes(&vec![v.clone(); 7]).unwrap(), v);
}

#[test]
fn ablation_matches_published_table() {
    let rows = ablation_table().unwrap();
    let get = |scenario: &str, rule: AggregationRule| {
        let r = rows.iter().find(|r| r.scenario == scenario && r.rule == rule).unwrap();
        ((r.tpr * 10.0).round() / 10.0, (r.tnr * 10.0).round() / 10.0)
    };
    use AggregationRule::*;
    let expected = [
        ("Default", [(100.0, 100.0), (100.0, 100.0), (100.0, 100.0), (100.0, 100.0), (100.0, 100.0)]),
        ("All Benign + 1 FN", [(88.9, 100.0), (88.9, 100.0), (88.9, 100.0), (100.0, 100.0), (100.0, 100.0)]),
        ("Default + 2 FP", [(100.0, 100.0), (100.0, 100.0), (100.0, 100.0), (0.0, 100.0), (100.0, 100.0)]),
        ("All Benign + 2 FN", [(77.8, 100.0), (77.8, 100.0), (77.8, 100.0), (0.0, 100.0), (100.0, 100.0)]),
        ("Malicious Split", [(100.0, 100.0), (0.0, 100.0), (0.0, 100.0), (100.0, 100.0), (100.0, 100.0)]),
    ];
    for (scenario, cells) in expected {
        for (rule, cell) in [Majority, KMeans, Agglomerative, Dbscan, Stacked].into_iter().zip(cells) {
            assert_eq!(get(scenario, rule), cell, "{scenario} / {rule:?}");
        }
    }
}

fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (5usize..12, 1usize..4)
        .prop_flat_map(|(n, cols)| prop::collection::vec(prop::collection::vec(-5.0..5.0f64, cols), n))
}

proptest! {
    #[test]
    fn prune_respects_bound_and_terminates(mut rows in matrix_strategy(), own in 0usize..5) {
        rows[own] = vec![0.0; rows[0].len()];
        let n = rows.len();
        let m = HlbimMatrix {
            metric: Metric::Euclidean,
            validator_index: own,
            columns: (0..rows[0].len()).map(|c| (0, c)).collect(),
            values: rows,
        };
        let trace = prune_metric(&m).unwrap();
        prop_assert!(trace.pruned().len() <= (n - 1) / 2);
        prop_assert!(trace.iterations.len() <= n);
        let mut seen = std::collections::HashSet::new();
        for it in &trace.iterations {
            for p in &it.pruned {
                prop_assert!(seen.insert(*p));
            }
        }
        let (bits, _, _) = prune_vote(&m, &m, own).unwrap();
        prop_assert!(bits[own]);
    }

    #[test]
    fn hlbim_ignores_sample_order(rot in 0usize..4, own in 0usize..3) {
        let (mut global, mut locals, mut labels) = hand_dlos();
        let h = hlbim_from_dlos(&global, &locals, &labels, own, Metric::Cosine, DistanceMode::Relative).unwrap();
        prop_assert!(h.values[own].iter().all(|&v| v == 0.0));
        global.rotate_left(rot);
        labels.rotate_left(rot);
        for m in &mut locals {
            m.rotate_left(rot);
        }
        let r = hlbim_from_dlos(&global, &locals, &labels, own, Metric::Cosine, DistanceMode::Relative).unwrap();
        for (a, b) in h.values.iter().flatten().zip(r.values.iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregation_ignores_validator_order(
        (votes, shuffled) in (3usize..8)
            .prop_flat_map(|n| prop::collection::vec(prop::collection::vec(any::<bool>(), n), 3..15))
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle())),
    ) {
        for rule in AggregationRule::ALL {
            prop_assert_eq!(rule.apply(&shuffled).unwrap(), rule.apply(&votes).unwrap());
        }
    }
}
