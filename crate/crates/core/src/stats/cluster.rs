//! Clustering primitives used by the pruning loop and the vote aggregation.

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Hierarchical agglomerative clustering with single linkage, merged until
/// two clusters remain.
///
/// Returns a label in `{0, 1}` per point; the cluster holding point 0 is
/// labelled 0. Ties between equally close cluster pairs merge the pair with
/// the lowest indices first. Fewer than two points yield a single cluster.
pub fn agglomerative_two(points: &[Vec<f64>]) -> Vec<usize> {
    let n = points.len();
    if n < 2 {
        return vec![0; n];
    }
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(&points[i], &points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    // cluster id = lowest member index; owner[i] maps points to clusters
    let mut owner: Vec<usize> = (0..n).collect();
    let mut active: Vec<usize> = (0..n).collect();
    while active.len() > 2 {
        let mut best = (f64::INFINITY, 0, 0);
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let d = dist[a * n + b];
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (_, keep, gone) = best;
        for &k in &active {
            let d = dist[keep * n + k].min(dist[gone * n + k]);
            dist[keep * n + k] = d;
            dist[k * n + keep] = d;
        }
        for o in owner.iter_mut() {
            if *o == gone {
                *o = keep;
            }
        }
        active.retain(|&c| c != gone);
    }
    owner.iter().map(|&o| usize::from(o != owner[0])).collect()
}

/// DBSCAN density clustering. Points within `eps` (inclusive) are neighbours;
/// a point is core when its neighbourhood, itself included, has at least
/// `min_samples` members. Noise points get `None`; clusters are numbered in
/// order of discovery by point index.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let neighbours: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| euclidean(&points[i], &points[j]) <= eps).collect()).collect();
    let is_core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_samples).collect();
    let mut labels = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if labels[start].is_some() || !is_core[start] {
            continue;
        }
        labels[start] = Some(next);
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for &q in &neighbours[p] {
                if labels[q].is_none() {
                    labels[q] = Some(next);
                    if is_core[q] {
                        stack.push(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

/// Two-means clustering (Lloyd iterations). Seeds are the first point and
/// the point farthest from it; ties go to the lower index.
pub fn kmeans_two(points: &[Vec<f64>]) -> Vec<usize> {
    let n = points.len();
    if n < 2 {
        return vec![0; n];
    }
    let mut far = 0;
    let mut far_d = -1.0;
    for (i, p) in points.iter().enumerate() {
        let d = euclidean(&points[0], p);
        if d > far_d {
            far_d = d;
            far = i;
        }
    }
    let mut centroids = [points[0].clone(), points[far].clone()];
    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let next: Vec<usize> =
            points.iter().map(|p| usize::from(euclidean(p, &centroids[1]) < euclidean(p, &centroids[0]))).collect();
        let changed = next != labels;
        labels = next;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (k, v) in centroid.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[k]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}
