//! Small statistical helpers shared across modules: standard-normal
//! functions, Monte Carlo proportion estimates, and the asymptotic
//! Kolmogorov distribution.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// A Monte Carlo proportion with its standard error `sqrt(p(1-p)/R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub se: f64,
    pub hits: u64,
    pub replications: u64,
}

impl McEstimate {
    pub fn from_indicator(hits: u64, replications: u64) -> Self {
        assert!(replications > 0);
        assert!(hits <= replications);
        let p = hits as f64 / replications as f64;
        McEstimate {
            estimate: p,
            se: (p * (1.0 - p) / replications as f64).sqrt(),
            hits,
            replications,
        }
    }
}

/// Standard normal CDF `Φ(x)`.
pub fn norm_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Standard normal density `φ(x)`.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile level must be in (0, 1)");
    Normal::standard().inverse_cdf(p)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = P(sup_t |B(t)| > x)` for a Brownian bridge `B`.
///
/// Two complementary series are used: the Jacobi theta expansion for small
/// `x` and the alternating exponential series for large `x`; both converge
/// to machine precision in a handful of terms near the crossover.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        let a = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let mut sum = 0.0;
        for k in 1..=20u32 {
            let odd = f64::from(2 * k - 1);
            let term = (-odd * odd * a).exp();
            sum += term;
            if term < 1e-18 {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100u32 {
            let kk = f64::from(k);
            let term = (-2.0 * kk * kk * x * x).exp();
            if k % 2 == 1 {
                sum += term;
            } else {
                sum -= term;
            }
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}
