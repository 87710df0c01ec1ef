use crate::error::{Error, Result};

/// Probability that strictly more than half of `sample` validators drawn
/// without replacement from a population of `population` clients, of which
/// `malicious` are adversarial, are malicious.
///
/// Terms are accumulated in log space through the pmf ratio recurrence and
/// normalised by the full support, so no binomial coefficient is formed.
pub fn hypergeometric_majority_prob(population: u64, malicious: u64, sample: u64) -> Result<f64> {
    if malicious > population || sample == 0 || sample > population {
        return Err(Error::Stats(format!(
            "need 0 <= K <= N and 0 < n <= N, got N={population}, K={malicious}, n={sample}"
        )));
    }
    let (big_n, big_k, n) = (population as f64, malicious as f64, sample as f64);
    let lo = sample.saturating_sub(population - malicious);
    let hi = sample.min(malicious);
    let threshold = sample / 2 + 1;
    if threshold > hi {
        return Ok(0.0);
    }
    if threshold <= lo {
        return Ok(1.0);
    }

    // log pmf(k) - log pmf(lo) for k in lo..=hi
    let mut logw = Vec::with_capacity((hi - lo + 1) as usize);
    let mut acc = 0.0;
    logw.push(acc);
    for k in lo..hi {
        let k = k as f64;
        let ratio = ((big_k - k) * (n - k)) / ((k + 1.0) * (big_n - big_k - n + k + 1.0));
        acc += ratio.ln();
        logw.push(acc);
    }
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let split = (threshold - lo) as usize;
    let mass = |ws: &[f64]| ws.iter().map(|w| (w - max).exp()).sum::<f64>();
    let (lower, upper) = (mass(&logw[..split]), mass(&logw[split..]));
    // divide out the smaller tail so rounding cannot break monotonicity near 1
    let p = if upper <= lower { upper / (upper + lower) } else { 1.0 - lower / (upper + lower) };
    Ok(p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries() {
        assert_eq!(hypergeometric_majority_prob(1000, 0, 50).unwrap(), 0.0);
        assert_eq!(hypergeometric_majority_prob(1000, 1000, 50).unwrap(), 1.0);
        assert!(hypergeometric_majority_prob(10, 11, 3).is_err());
        assert!(hypergeometric_majority_prob(10, 2, 0).is_err());
    }

    #[test]
    fn tiny_case_by_hand() {
        // N=4, K=2, n=3: P(X >= 2) = C(2,2)C(2,1)/C(4,3) = 2/4
        assert!((hypergeometric_majority_prob(4, 2, 3).unwrap() - 0.5).abs() < 1e-15);
        // N=5, K=3, n=2: P(X >= 2) = C(3,2)/C(5,2) = 3/10
        assert!((hypergeometric_majority_prob(5, 3, 2).unwrap() - 0.3).abs() < 1e-15);
    }
}
