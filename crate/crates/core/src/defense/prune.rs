use super::HlbimMatrix;
use crate::error::{Error, Result};
use crate::nn::Metric;
use crate::stats::{
    agglomerative_two, ks_test, levene_test, median, outlier_iqr, outlier_three_sigma, pca_first_component,
    student_t_test, SIGNIFICANCE_LEVEL,
};
use serde::Serialize;

/// Outcome of the test bundle on one set of PC scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignificanceVerdict {
    pub t_p: f64,
    pub levene_p: f64,
    pub ks_p: f64,
    pub iqr_outlier: bool,
    pub three_sigma_outlier: bool,
    pub significant: bool,
}

impl SignificanceVerdict {
    fn degenerate() -> Self {
        Self { t_p: 1.0, levene_p: 1.0, ks_p: 1.0, iqr_outlier: false, three_sigma_outlier: false, significant: false }
    }
}

/// Compares the deviations above and below the median with the t, Levene and
/// KS tests and checks the scores for boxplot and 3-sigma outliers. Fewer
/// than four scores are never significant.
pub fn significance(scores: &[f64]) -> SignificanceVerdict {
    if scores.len() < 4 {
        return SignificanceVerdict::degenerate();
    }
    let med = median(scores);
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for &v in scores {
        let d = v - med;
        if d >= 0.0 {
            upper.push(d);
        } else {
            lower.push(-d);
        }
    }
    let t_p = student_t_test(&upper, &lower);
    let levene_p = levene_test(&upper, &lower);
    let ks_p = ks_test(&upper, &lower);
    let iqr_outlier = !outlier_iqr(scores).is_empty();
    let three_sigma_outlier = !outlier_three_sigma(scores).is_empty();
    let significant = t_p < SIGNIFICANCE_LEVEL
        || levene_p < SIGNIFICANCE_LEVEL
        || ks_p < SIGNIFICANCE_LEVEL
        || iqr_outlier
        || three_sigma_outlier;
    SignificanceVerdict { t_p, levene_p, ks_p, iqr_outlier, three_sigma_outlier, significant }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneIteration {
    /// Model indices entering this iteration.
    pub surviving: Vec<usize>,
    /// First-component score of each surviving model.
    pub scores: Vec<f64>,
    pub explained_variance_ratio: f64,
    pub verdict: SignificanceVerdict,
    pub pruned: Vec<usize>,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneTrace {
    pub metric: Metric,
    pub iterations: Vec<PruneIteration>,
}

impl PruneTrace {
    /// Models marked malicious after all iterations.
    pub fn pruned(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.iterations.iter().flat_map(|it| it.pruned.iter().copied()).collect();
        all.sort_unstable();
        all
    }
}

/// Iterative pruning on one matrix. At most `floor((n - 1) / 2)` models end
/// up pruned: when an iteration overshoots, its pruned models closest to the
/// median score are released until the bound holds and pruning stops.
pub fn prune_metric(matrix: &HlbimMatrix) -> Result<PruneTrace> {
    let n = matrix.model_count();
    let bound = n.saturating_sub(1) / 2;
    let mut marked = vec![false; n];
    let mut total = 0usize;
    let mut iterations = Vec::new();
    loop {
        let surviving: Vec<usize> = (0..n).filter(|&m| !marked[m]).collect();
        if surviving.len() < 4 {
            iterations.push(PruneIteration {
                scores: vec![0.0; surviving.len()],
                surviving,
                explained_variance_ratio: 0.0,
                verdict: SignificanceVerdict::degenerate(),
                pruned: Vec::new(),
                aborted: false,
            });
            break;
        }
        let rows: Vec<Vec<f64>> = surviving.iter().map(|&m| matrix.values[m].clone()).collect();
        let pc = pca_first_component(&rows)?;
        let verdict = significance(&pc.scores);
        let mut it = PruneIteration {
            surviving: surviving.clone(),
            scores: pc.scores.clone(),
            explained_variance_ratio: pc.explained_variance_ratio,
            verdict,
            pruned: Vec::new(),
            aborted: false,
        };
        if !verdict.significant {
            iterations.push(it);
            break;
        }
        let points: Vec<Vec<f64>> = pc.scores.iter().map(|&s| vec![s]).collect();
        let labels = agglomerative_two(&points);
        let size1 = labels.iter().filter(|&&l| l == 1).count();
        let size0 = labels.len() - size1;
        let smaller = if size0 < size1 {
            0
        } else if size1 < size0 {
            1
        } else {
            // equal halves: keep the validator's own cluster
            let own_pos = surviving.iter().position(|&m| m == matrix.validator_index);
            own_pos.map_or(1, |p| 1 - labels[p])
        };
        let mut pruned: Vec<(usize, f64)> =
            (0..surviving.len()).filter(|&i| labels[i] == smaller).map(|i| (surviving[i], pc.scores[i])).collect();
        if pruned.is_empty() {
            iterations.push(it);
            break;
        }
        if total + pruned.len() > bound {
            let med = median(&pc.scores);
            // farthest from the median first; the tail is released
            pruned.sort_by(|a, b| (b.1 - med).abs().total_cmp(&(a.1 - med).abs()).then(a.0.cmp(&b.0)));
            pruned.truncate(bound - total);
            it.aborted = true;
        }
        let mut ids: Vec<usize> = pruned.into_iter().map(|(m, _)| m).collect();
        ids.sort_unstable();
        for &m in &ids {
            marked[m] = true;
        }
        total += ids.len();
        it.pruned = ids;
        let stop = it.aborted;
        iterations.push(it);
        if stop {
            break;
        }
    }
    Ok(PruneTrace { metric: matrix.metric, iterations })
}

/// Votes from the cosine and Euclidean matrices: a model is rejected when
/// either metric prunes it; the validator's own model is always accepted.
pub fn prune_vote(
    cosine: &HlbimMatrix,
    euclidean: &HlbimMatrix,
    own_index: usize,
) -> Result<(Vec<bool>, PruneTrace, PruneTrace)> {
    let n = cosine.model_count();
    if euclidean.model_count() != n {
        return Err(Error::Defense(format!("matrices cover {n} and {} models", euclidean.model_count())));
    }
    if own_index >= n {
        return Err(Error::Defense(format!("own index {own_index} out of {n} models")));
    }
    let tc = prune_metric(cosine)?;
    let te = prune_metric(euclidean)?;
    let mut bits = vec![true; n];
    for m in tc.pruned().into_iter().chain(te.pruned()) {
        bits[m] = false;
    }
    bits[own_index] = true;
    Ok((bits, tc, te))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn matrix(values: Vec<Vec<f64>>) -> HlbimMatrix {
        let cols = values[0].len();
        HlbimMatrix { metric: Metric::Cosine, validator_index: 0, columns: (0..cols).map(|c| (0, c)).collect(), values }
    }

    #[test]
    fn symmetric_scores_pass_the_tests() {
        let v = significance(&[-3.0, -1.0, 1.0, 3.0, -2.0, 2.0]);
        assert_eq!(v.t_p, 1.0);
        assert_eq!(v.levene_p, 1.0);
        assert_eq!(v.ks_p, 1.0);
        assert!(!v.significant);
    }

    #[test]
    fn single_spike_is_three_sigma_outlier() {
        let v = significance(&[0.0, 0.0, 0.0, 0.0, 0.0, 9.0]);
        assert!(v.three_sigma_outlier);
        assert!(v.significant);
    }

    #[test]
    fn too_few_scores_never_significant() {
        assert!(!significance(&[0.0, 100.0, 0.0]).significant);
    }

    #[test]
    fn noise_rows_keep_everyone() {
        let mut rng = seeded(2);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let (bits, tc, _) = prune_vote(&matrix(rows.clone()), &matrix(rows), 0).unwrap();
        assert!(bits.iter().all(|&b| b));
        assert_eq!(tc.iterations.len(), 1);
    }

    #[test]
    fn far_row_is_pruned_first() {
        let mut rng = seeded(5);
        let mut rows: Vec<Vec<f64>> = (0..15).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        rows[7] = vec![40.0, 40.0, 40.0, 40.0];
        let (bits, tc, _) = prune_vote(&matrix(rows.clone()), &matrix(rows), 0).unwrap();
        assert_eq!(tc.iterations[0].pruned, vec![7]);
        assert!(!bits[7]);
    }

    #[test]
    fn abort_caps_pruned_count() {
        // a gradient of rows forces repeated pruning
        let rows: Vec<Vec<f64>> = (0..9).map(|i| vec![(3.0f64).powi(i), 0.0]).collect();
        let trace = prune_metric(&matrix(rows)).unwrap();
        assert!(trace.pruned().len() <= 4);
    }

    #[test]
    fn mismatched_matrices_rejected() {
        let a = matrix(vec![vec![0.0]; 5]);
        let b = matrix(vec![vec![0.0]; 6]);
        assert!(prune_vote(&a, &b, 0).is_err());
    }
}
