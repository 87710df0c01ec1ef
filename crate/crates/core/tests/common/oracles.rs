//! Independent references for the statistics kit.

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub struct Pair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub t_p: f64,
    pub levene_p: f64,
    pub ks_d: f64,
    pub ks_p: f64,
}

pub fn fixture() -> Vec<Pair> {
    let text = include_str!("../fixtures/two_sample.csv");
    let vec = |s: &str| s.split(';').map(|x| x.parse().unwrap()).collect::<Vec<f64>>();
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            Pair {
                a: vec(f[1]),
                b: vec(f[2]),
                t_p: f[3].parse().unwrap(),
                levene_p: f[4].parse().unwrap(),
                ks_d: f[5].parse().unwrap(),
                ks_p: f[6].parse().unwrap(),
            }
        })
        .collect()
}

pub fn eigen_scores(rows: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let (n, p) = (rows.len(), rows[0].len());
    let mut x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    for j in 0..p {
        let m = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-m);
    }
    let cov = x.transpose() * &x / (n as f64 - 1.0);
    let eig = cov.symmetric_eigen();
    let (k, top) =
        eig.eigenvalues.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| {
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            },
        );
    let mut v = eig.eigenvectors.column(k).into_owned();
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            v = -v;
        }
    }
    let total: f64 = eig.eigenvalues.iter().sum();
    ((&x * v).iter().copied().collect(), top / total)
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Smallest distance between the two sides of a partition.
pub fn spacing(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..points.len() {
            if labels[i] == 0 && labels[j] == 1 {
                best = best.min(dist(&points[i], &points[j]));
            }
        }
    }
    best
}

/// Every split into two non-empty groups, maximizing the spacing. Returns the
/// best spacing and whether the maximizer is unique.
pub fn best_partition(points: &[Vec<f64>]) -> (f64, Vec<usize>, bool) {
    let n = points.len();
    let mut best = (f64::NEG_INFINITY, Vec::new(), true);
    // point 0 always in group 0
    for mask in 1u32..(1 << (n - 1)) {
        let labels: Vec<usize> = (0..n).map(|i| if i == 0 { 0 } else { ((mask >> (i - 1)) & 1) as usize }).collect();
        let s = spacing(points, &labels);
        if s > best.0 + 1e-12 {
            best = (s, labels, true);
        } else if (s - best.0).abs() <= 1e-12 {
            best.2 = false;
        }
    }
    best
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    let mut out = BigUint::one();
    for i in 0..k {
        out = out * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    out
}

/// Exact `P(X > n/2)` as a ratio of big integers.
pub fn hypergeom_exact(big_n: u64, big_k: u64, n: u64) -> f64 {
    let mut num = BigUint::zero();
    for k in (n / 2 + 1)..=n.min(big_k) {
        if n - k <= big_n - big_k {
            num += binomial(big_k, k) * binomial(big_n - big_k, n - k);
        }
    }
    BigRational::new(num.into(), binomial(big_n, n).into()).to_f64().unwrap()
}
