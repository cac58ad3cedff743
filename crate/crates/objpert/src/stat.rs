//! Thin wrappers around the standard normal distribution.

use statrs::distribution::{ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    std_normal().inverse_cdf(p)
}

/// The two-sided confidence multiplier used throughout the report
/// construction: the (1 - rho/2) standard normal quantile.
pub fn two_sided_pad(rho: f64) -> f64 {
    normal_quantile(1.0 - rho / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Bisection on the CDF; independent of the closed-form inverse.
    fn quantile_by_bisection(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_matches_cdf_bisection() {
        for &p in &[0.5, 0.9, 0.975, 1.0 - 1e-4, 1.0 - 5e-7, 1e-3] {
            let q = normal_quantile(p);
            let oracle = quantile_by_bisection(p);
            assert!(
                (q - oracle).abs() < 1e-7,
                "p={p}: quantile {q} vs bisection {oracle}"
            );
        }
    }

    #[test]
    fn known_values() {
        assert!(normal_quantile(0.5).abs() < 1e-12);
        // Used by a worked report example.
        assert!((normal_quantile(1.0 - 5e-7) - 4.8916).abs() < 1e-3);
        assert!((normal_cdf(1.959963985) - 0.975).abs() < 1e-9);
    }
}
