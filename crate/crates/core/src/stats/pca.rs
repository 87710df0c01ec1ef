use crate::error::{Error, Result};

/// Projection of each row onto the first principal component.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstComponent {
    pub scores: Vec<f64>,
    /// Unit loading vector in feature space. Its first non-negligible entry is
    /// positive.
    pub loading: Vec<f64>,
    /// Share of total variance carried by the component; 0 when the rows have
    /// no spread at all.
    pub explained_variance_ratio: f64,
}

/// First principal component of `rows` (one row per observation).
///
/// Columns are centered; the eigenproblem is solved on whichever of the
/// covariance (features x features) or Gram (rows x rows) matrix is smaller.
pub fn pca_first_component(rows: &[Vec<f64>]) -> Result<FirstComponent> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Stats(format!("PCA needs at least 2 rows, got {n}")));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Stats("ragged PCA input".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Stats("non-finite PCA input".into()));
    }
    if p == 0 {
        return Ok(FirstComponent { scores: vec![0.0; n], loading: Vec::new(), explained_variance_ratio: 0.0 });
    }

    let means: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect()).collect();
    let total: f64 = centered.iter().flatten().map(|v| v * v).sum();
    if total == 0.0 {
        return Ok(FirstComponent { scores: vec![0.0; n], loading: vec![0.0; p], explained_variance_ratio: 0.0 });
    }

    let (lambda, mut loading) = if p <= n {
        let mut cov = vec![0.0; p * p];
        for r in &centered {
            for i in 0..p {
                for j in i..p {
                    cov[i * p + j] += r[i] * r[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                cov[i * p + j] = cov[j * p + i];
            }
        }
        top_eigenpair(cov, p)
    } else {
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                gram[i * n + j] = dot;
                gram[j * n + i] = dot;
            }
        }
        let (lambda, u) = top_eigenpair(gram, n);
        let mut v = vec![0.0; p];
        for (ui, r) in u.iter().zip(&centered) {
            for (vj, rj) in v.iter_mut().zip(r) {
                *vj += ui * rj;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        (lambda, v)
    };

    let scale = loading.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = loading.iter().find(|v| v.abs() > 1e-9 * scale) {
        if *first < 0.0 {
            loading.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let scores = centered.iter().map(|r| r.iter().zip(&loading).map(|(a, b)| a * b).sum()).collect();
    Ok(FirstComponent { scores, loading, explained_variance_ratio: (lambda / total).clamp(0.0, 1.0) })
}

/// Largest eigenvalue and its unit eigenvector of a symmetric matrix, via
/// cyclic Jacobi rotations.
fn top_eigenpair(mut a: Vec<f64>, n: usize) -> (f64, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let best = (0..n).max_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]).then(j.cmp(&i))).unwrap_or(0);
    let vec = (0..n).map(|k| v[k * n + best]).collect();
    (a[best * n + best], vec)
}
