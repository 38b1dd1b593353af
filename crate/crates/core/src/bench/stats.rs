//! Binomial summaries for success rates.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use thiserror::Error;

/// Bonferroni-corrected significance level for three pairwise tests.
pub const ALPHA_CORRECTED: f64 = 0.05 / 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no trials")]
    NoTrials,
    #[error("{k} successes out of {n} trials")]
    Count { k: u64, n: u64 },
    #[error("confidence {0} outside (0, 1)")]
    Confidence(f64),
}

fn z_for(confidence: f64) -> Result<f64, StatsError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::Confidence(confidence));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(1.0 - (1.0 - confidence) / 2.0))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_ci(k: u64, n: u64, confidence: f64) -> Result<(f64, f64), StatsError> {
    if n == 0 {
        return Err(StatsError::NoTrials);
    }
    if k > n {
        return Err(StatsError::Count { k, n });
    }
    let z = z_for(confidence)?;
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = z / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    // pin the boundaries exactly
    let low = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let high = if k == n { 1.0 } else { (centre + half).min(1.0) };
    Ok((low, high))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
    /// Pooled proportion is 0 or 1; `p_value` is 1 by convention.
    pub degenerate: bool,
}

/// Pooled two-proportion z-test, two-sided.
pub fn two_prop_ztest(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ZTest, StatsError> {
    if n1 == 0 || n2 == 0 {
        return Err(StatsError::NoTrials);
    }
    if k1 > n1 {
        return Err(StatsError::Count { k: k1, n: n1 });
    }
    if k2 > n2 {
        return Err(StatsError::Count { k: k2, n: n2 });
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    if pooled == 0.0 || pooled == 1.0 {
        return Ok(ZTest { z: 0.0, p_value: 1.0, degenerate: true });
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (k1 as f64 / n1f - k2 as f64 / n2f) / se;
    // erfc keeps precision far into the tail
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    Ok(ZTest { z, p_value, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wilson_boundaries() {
        assert_eq!(wilson_ci(0, 20, 0.95).unwrap().0, 0.0);
        assert_eq!(wilson_ci(20, 20, 0.95).unwrap().1, 1.0);
        assert_eq!(wilson_ci(1, 0, 0.95), Err(StatsError::NoTrials));
        assert!(wilson_ci(3, 2, 0.95).is_err());
    }

    #[test]
    fn wilson_reference_value() {
        // independent evaluation with Python's statistics.NormalDist
        let (lo, hi) = wilson_ci(130, 150, 0.95).unwrap();
        assert_abs_diff_eq!(lo, 0.803_019_825_5, epsilon = 1e-6);
        assert_abs_diff_eq!(hi, 0.912_001_995_3, epsilon = 1e-6);
    }

    #[test]
    fn ztest_examples() {
        let same = two_prop_ztest(30, 60, 15, 30).unwrap();
        assert_eq!((same.z, same.p_value), (0.0, 1.0));
        let close = two_prop_ztest(123, 150, 130, 150).unwrap();
        assert_abs_diff_eq!(close.p_value, 0.266_199_04, epsilon = 1e-6);
        assert!(two_prop_ztest(130, 150, 72, 150).unwrap().p_value < 1e-9);
        assert!(two_prop_ztest(0, 10, 0, 10).unwrap().degenerate);
    }

    proptest! {
        #[test]
        fn wilson_contains_the_rate(n in 1u64..500, frac in 0.0f64..=1.0) {
            let k = (frac * n as f64).round() as u64;
            let (lo, hi) = wilson_ci(k, n, 0.95).unwrap();
            let p = k as f64 / n as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        }

        #[test]
        fn wilson_narrows_with_n(k in 1u64..50, scale in 2u64..6) {
            let n = 2 * k + 3;
            let (a, b) = wilson_ci(k, n, 0.95).unwrap();
            let (c, d) = wilson_ci(k * scale, n * scale, 0.95).unwrap();
            prop_assert!(d - c < b - a);
        }

        #[test]
        fn ztest_is_symmetric(k1 in 0u64..100, k2 in 0u64..100) {
            let a = two_prop_ztest(k1, 100, k2, 100).unwrap();
            let b = two_prop_ztest(k2, 100, k1, 100).unwrap();
            prop_assert_eq!(a.p_value, b.p_value);
        }
    }
}
