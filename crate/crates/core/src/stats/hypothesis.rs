//! Two-sample hypothesis tests. Every function returns a two-sided p-value in
//! `[0, 1]`; degenerate inputs (fewer than two samples on a side, or no spread
//! at all) return 1.0 so callers treat them as non-significant.

use super::special::{f_upper_tail, kolmogorov_sf, student_t_two_sided};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sum_sq_dev(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

/// Pooled-variance Student t-test for equal means.
pub fn student_t_test(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < 2 || b.len() < 2 {
        return 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let df = na + nb - 2.0;
    let pooled = (sum_sq_dev(a, ma) + sum_sq_dev(b, mb)) / df;
    let diff = ma - mb;
    if pooled == 0.0 {
        return if diff == 0.0 { 1.0 } else { 0.0 };
    }
    let t = diff / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    student_t_two_sided(t, df)
}

/// Levene test for equal variances, using absolute deviations from the group
/// means.
pub fn levene_test(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < 2 || b.len() < 2 {
        return 1.0;
    }
    let za: Vec<f64> = {
        let m = mean(a);
        a.iter().map(|x| (x - m).abs()).collect()
    };
    let zb: Vec<f64> = {
        let m = mean(b);
        b.iter().map(|x| (x - m).abs()).collect()
    };
    let (na, nb) = (za.len() as f64, zb.len() as f64);
    let total = na + nb;
    let (mza, mzb) = (mean(&za), mean(&zb));
    let grand = (na * mza + nb * mzb) / total;
    let between = na * (mza - grand).powi(2) + nb * (mzb - grand).powi(2);
    let within = sum_sq_dev(&za, mza) + sum_sq_dev(&zb, mzb);
    if within == 0.0 {
        return if between == 0.0 { 1.0 } else { 0.0 };
    }
    let w = (total - 2.0) * between / within;
    f_upper_tail(w, 1.0, total - 2.0)
}

/// Two-sample Kolmogorov-Smirnov statistic `D = sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value evaluated
/// at the effective sample size `n_a * n_b / (n_a + n_b)`.
pub fn ks_test(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let d = ks_statistic(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let en = na * nb / (na + nb);
    kolmogorov_sf(en.sqrt() * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_unit_p() {
        let a = [0.3, 1.2, 2.5, 4.0, 4.1];
        assert_eq!(student_t_test(&a, &a), 1.0);
        assert!((levene_test(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_test(&a, &a), 1.0);
    }

    #[test]
    fn far_apart_means_are_significant() {
        let p = student_t_test(&[1.0, 2.0, 3.0], &[101.0, 102.0, 103.0]);
        // t = -122.47 with 4 df
        assert!(p < 1e-6, "p = {p}");
        assert!(p > 0.0);
    }

    #[test]
    fn constant_groups_follow_convention() {
        assert_eq!(student_t_test(&[2.0, 2.0], &[2.0, 2.0, 2.0]), 1.0);
        assert_eq!(student_t_test(&[2.0, 2.0], &[3.0, 3.0]), 0.0);
        assert_eq!(levene_test(&[5.0, 5.0, 5.0], &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn undersized_groups_are_degenerate() {
        assert_eq!(student_t_test(&[1.0], &[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(levene_test(&[1.0, 2.0, 3.0], &[]), 1.0);
        assert_eq!(ks_test(&[], &[1.0]), 1.0);
    }

    #[test]
    fn levene_detects_inflated_spread() {
        let a: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin() + 5.0).collect();
        let m = mean(&a);
        let b: Vec<f64> = a.iter().map(|x| 100.0 * (x - m) + m).collect();
        assert!(levene_test(&a, &b) < 0.01);
        // shifting does not change spread
        let c: Vec<f64> = a.iter().map(|x| x + 3.0).collect();
        assert!(levene_test(&a, &c) > 0.5);
    }

    #[test]
    fn disjoint_supports_have_unit_statistic() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[10.0, 11.0]), 1.0);
    }

    #[test]
    fn ks_statistic_matches_ecdf_sweep() {
        let a = [0.1, 0.4, 0.4, 0.9, 1.3, 2.2];
        let b = [0.2, 0.4, 1.0, 1.1, 3.0];
        let ecdf = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x <= t).count() as f64 / xs.len() as f64;
        let brute = a.iter().chain(b.iter()).map(|&t| (ecdf(&a, t) - ecdf(&b, t)).abs()).fold(0.0, f64::max);
        assert!((ks_statistic(&a, &b) - brute).abs() < 1e-12);
    }
}
