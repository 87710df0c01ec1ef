/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile(&sorted, 0.5)
}

/// Indices of values outside the boxplot fences `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`.
pub fn outlier_iqr(values: &[f64]) -> Vec<usize> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    values.iter().enumerate().filter(|(_, &v)| v < lo || v > hi).map(|(i, _)| i).collect()
}

/// Indices of values outside the 3-sigma interval spanned by the remaining
/// values (their mean plus or minus three population standard deviations).
pub fn outlier_three_sigma(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    if n < 2 {
        return Vec::new();
    }
    let sum: f64 = values.iter().sum();
    let rest = (n - 1) as f64;
    values
        .iter()
        .enumerate()
        .filter(|(i, &v)| {
            let mean = (sum - v) / rest;
            let var =
                values.iter().enumerate().filter(|(j, _)| j != i).map(|(_, &w)| (w - mean).powi(2)).sum::<f64>() / rest;
            (v - mean).abs() > 3.0 * var.sqrt()
        })
        .map(|(i, _)| i)
        .collect()
}
