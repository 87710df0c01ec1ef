use crate::error::{Error, Result};
use crate::stats::{agglomerative_two, dbscan, kmeans_two};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;

/// One bit per local model; `true` means benign.
pub type VoteVector = Vec<bool>;
/// One vote vector per validator.
pub type VoteMatrix = Vec<VoteVector>;

fn check_matrix(votes: &[VoteVector]) -> Result<usize> {
    let first = votes.first().ok_or_else(|| Error::Defense("empty vote matrix".into()))?;
    if votes.iter().any(|v| v.len() != first.len()) {
        return Err(Error::Defense("ragged vote matrix".into()));
    }
    Ok(first.len())
}

fn as_points(votes: &[&VoteVector]) -> Vec<Vec<f64>> {
    votes.iter().map(|v| v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).collect()
}

/// Rows in sorted order, so tied clustering merges do not depend on which
/// validator happened to come first.
fn canonical_rows(votes: &[VoteVector]) -> Vec<&VoteVector> {
    let mut rows: Vec<&VoteVector> = votes.iter().collect();
    rows.sort();
    rows
}

fn accepted(v: &[bool]) -> usize {
    v.iter().filter(|&&b| b).count()
}

/// Rows of the larger of two clusters. Equal halves go to the side casting
/// more accept votes, then to the lexicographically larger sorted row list,
/// so the choice does not depend on validator order.
fn majority_cluster<'a>(votes: &[&'a VoteVector], labels: &[usize]) -> Vec<&'a VoteVector> {
    let mut sides: [Vec<&VoteVector>; 2] = [Vec::new(), Vec::new()];
    for (v, &l) in votes.iter().zip(labels) {
        sides[l.min(1)].push(v);
    }
    fn key(side: &[&VoteVector]) -> (usize, usize, Vec<VoteVector>) {
        let mut rows: Vec<VoteVector> = side.iter().map(|v| (*v).clone()).collect();
        rows.sort();
        (side.len(), side.iter().map(|v| accepted(v)).sum::<usize>(), rows)
    }
    let [a, b] = sides;
    if key(&a) >= key(&b) {
        a
    } else {
        b
    }
}

/// Most frequent vote vector; ties go to the vector accepting more models,
/// then to the lexicographically larger one.
fn largest_identical_group(votes: &[&VoteVector]) -> Option<VoteVector> {
    let points = as_points(votes);
    let groups = dbscan(&points, 0.5, 1);
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        if let Some(g) = g {
            members.entry(*g).or_default().push(i);
        }
    }
    members.values().map(|rows| (rows.len(), accepted(votes[rows[0]]), votes[rows[0]].clone())).max().map(|(_, _, v)| v)
}

/// Stacked clustering: keep the larger of two agglomerative clusters, then
/// adopt the most common vote vector inside it.
pub fn aggregate_votes(votes: &[VoteVector]) -> Result<VoteVector> {
    let n = check_matrix(votes)?;
    let rows = canonical_rows(votes);
    let labels = agglomerative_two(&as_points(&rows));
    let majority = majority_cluster(&rows, &labels);
    Ok(largest_identical_group(&majority).unwrap_or_else(|| vec![true; n]))
}

/// Vote aggregation rules compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationRule {
    /// Reject a model when more than half the validators reject it.
    Majority,
    /// Larger k-means cluster; a model is accepted if any member accepts it.
    #[serde(rename = "kmeans")]
    KMeans,
    /// Larger agglomerative cluster; same acceptance rule as k-means.
    Agglomerative,
    /// Most common vote vector over all validators.
    Dbscan,
    #[default]
    Stacked,
}

impl AggregationRule {
    pub const ALL: [AggregationRule; 5] =
        [Self::Majority, Self::KMeans, Self::Agglomerative, Self::Dbscan, Self::Stacked];

    pub fn name(self) -> &'static str {
        match self {
            Self::Majority => "majority",
            Self::KMeans => "kmeans",
            Self::Agglomerative => "agglomerative",
            Self::Dbscan => "dbscan",
            Self::Stacked => "stacked",
        }
    }

    pub fn apply(self, votes: &[VoteVector]) -> Result<VoteVector> {
        let n = check_matrix(votes)?;
        let rows = canonical_rows(votes);
        let any_accept = |cluster: Vec<&VoteVector>| (0..n).map(|m| cluster.iter().any(|v| v[m])).collect();
        match self {
            Self::Majority => Ok((0..n)
                .map(|m| {
                    let rejects = votes.iter().filter(|v| !v[m]).count();
                    2 * rejects <= votes.len()
                })
                .collect()),
            Self::KMeans => Ok(any_accept(majority_cluster(&rows, &kmeans_two(&as_points(&rows))))),
            Self::Agglomerative => Ok(any_accept(majority_cluster(&rows, &agglomerative_two(&as_points(&rows))))),
            Self::Dbscan => Ok(largest_identical_group(&rows).unwrap_or_else(|| vec![true; n])),
            Self::Stacked => aggregate_votes(votes),
        }
    }
}

impl FromStr for AggregationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown aggregation rule {s:?}")))
    }
}

/// Detection rates with poisoned models as positives. Rates are `None` when
/// their denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionMetrics {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub precision: Option<f64>,
}

pub fn detection_metrics(malicious: &[bool], accepted: &[bool]) -> DetectionMetrics {
    let (mut tp, mut fneg, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (&bad, &ok) in malicious.iter().zip(accepted) {
        match (bad, ok) {
            (true, false) => tp += 1,
            (true, true) => fneg += 1,
            (false, true) => tn += 1,
            (false, false) => fp += 1,
        }
    }
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    DetectionMetrics {
        tpr: ratio(tp, fneg),
        tnr: ratio(tn, fp),
        fpr: ratio(fp, tn),
        fnr: ratio(fneg, tp),
        precision: ratio(tp, fp),
    }
}

/// A deterministic vote matrix with known ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationScenario {
    pub name: &'static str,
    pub votes: VoteMatrix,
    /// `true` for poisoned models.
    pub malicious: Vec<bool>,
}

const CLIENTS: usize = 20;
const BENIGN: usize = 11;

/// Five scenarios with 20 clients, 9 of them malicious. Malicious validators
/// accept everything unless stated otherwise; benign validators vote
/// correctly unless stated otherwise.
pub fn ablation_scenarios() -> Vec<AblationScenario> {
    let truth: VoteVector = (0..CLIENTS).map(|m| m < BENIGN).collect();
    let accept_all = vec![true; CLIENTS];
    let reject_all = vec![false; CLIENTS];
    let with = |base: &VoteVector, m: usize, bit: bool| {
        let mut v = base.clone();
        v[m] = bit;
        v
    };
    let build = |benign: Vec<VoteVector>, malicious: Vec<VoteVector>| {
        let mut votes = benign;
        votes.extend(malicious);
        votes
    };
    let correct = |k: usize| vec![truth.clone(); k];
    let attackers = vec![accept_all.clone(); CLIENTS - BENIGN];

    let one_fn = {
        let mut b = correct(BENIGN - 1);
        b.push(with(&truth, BENIGN, true));
        b
    };
    let two_fp = {
        let mut b = correct(BENIGN - 2);
        b.extend(vec![with(&truth, 0, false); 2]);
        b
    };
    let two_fn = {
        let mut b = correct(BENIGN - 2);
        b.push(with(&truth, BENIGN, true));
        b.push(with(&truth, BENIGN + 1, true));
        b
    };
    let split = {
        let mut m = vec![accept_all.clone(); 5];
        m.extend(vec![reject_all; 4]);
        m
    };
    let malicious: Vec<bool> = truth.iter().map(|b| !b).collect();
    [
        ("Default", build(correct(BENIGN), attackers.clone())),
        ("All Benign + 1 FN", build(one_fn, attackers.clone())),
        ("Default + 2 FP", build(two_fp, attackers.clone())),
        ("All Benign + 2 FN", build(two_fn, attackers)),
        ("Malicious Split", build(correct(BENIGN), split)),
    ]
    .into_iter()
    .map(|(name, votes)| AblationScenario { name, votes, malicious: malicious.clone() })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub scenario: &'static str,
    pub rule: AggregationRule,
    /// Percentages.
    pub tpr: f64,
    pub tnr: f64,
}

/// Every scenario under every rule.
pub fn ablation_table() -> Result<Vec<AblationRow>> {
    let mut out = Vec::new();
    for sc in ablation_scenarios() {
        for rule in AggregationRule::ALL {
            let decision = rule.apply(&sc.votes)?;
            let m = detection_metrics(&sc.malicious, &decision);
            out.push(AblationRow {
                scenario: sc.name,
                rule,
                tpr: 100.0 * m.tpr.unwrap_or(0.0),
                tnr: 100.0 * m.tnr.unwrap_or(0.0),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_votes_pass_through() {
        let v = vec![true, false, true, true];
        assert_eq!(aggregate_votes(&vec![v.clone(); 6]).unwrap(), v);
    }

    #[test]
    fn bad_matrices() {
        assert!(aggregate_votes(&[]).is_err());
        assert!(aggregate_votes(&[vec![true], vec![true, false]]).is_err());
    }

    #[test]
    fn metrics_complement() {
        let m = detection_metrics(&[true, true, false, false], &[false, true, true, false]);
        assert_eq!(m.tpr, Some(0.5));
        assert_eq!(m.fnr, Some(0.5));
        assert_eq!(m.tnr, Some(0.5));
        assert_eq!(m.precision, Some(0.5));
        let none = detection_metrics(&[false, false], &[true, true]);
        assert_eq!(none.tpr, None);
        assert_eq!(none.precision, None);
        assert_eq!(none.fpr, Some(0.0));
    }

    #[test]
    fn rule_names_round_trip() {
        for r in AggregationRule::ALL {
            assert_eq!(r.name().parse::<AggregationRule>().unwrap(), r);
        }
        assert!("median".parse::<AggregationRule>().is_err());
    }

    #[test]
    fn scenarios_have_twenty_validators() {
        for sc in ablation_scenarios() {
            assert_eq!(sc.votes.len(), 20);
            assert!(sc.votes.iter().all(|v| v.len() == 20));
        }
    }
}
