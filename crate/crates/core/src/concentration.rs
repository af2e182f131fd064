//! Numerical verification of the maximal inequality for drifted sample
//! means.
//!
//! For i.i.d. centered increments with a decreasing drift `g`, the process
//! `Q_n = X̄_n + g(n)` satisfies `E[Q_{n+1} | F_n] = Q_n + R_n` with
//! `R_n = -X̄_n/(n+1) + (g(n+1) - g(n))`, and therefore
//!
//! ```text
//! P( max_{lo ≤ n ≤ hi} Q_n ≥ λ )  ≤  ( E|Q_hi| + Σ_{k=lo}^{hi-1} E|R_k| ) / λ
//! ```
//!
//! For Gaussian increments both expectations are folded-normal means and the
//! bound is exact-to-roundoff ([`maximal_bound_gaussian`]); for general
//! sub-Gaussian increments a universal constant `C̃` enters
//! ([`maximal_bound_subgaussian`]). [`mc_max_probability`] estimates the
//! left-hand side by simulation so the inequality can be checked end to end.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{derive_stream, ROLE_MAXIMAL};
use crate::stats::{norm_cdf, McEstimate};
use crate::{Error, Result};

const SQRT_2_OVER_PI: f64 = 0.7978845608028654;

/// Drift term `g(n)` added to the running sample mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DriftFn {
    /// `g(n) = gamma / sqrt(n)`.
    InverseSqrt { gamma: f64 },
    /// Tabulated values for `n = start, start+1, ...`.
    Table { start: u64, values: Vec<f64> },
}

impl DriftFn {
    pub fn eval(&self, n: u64) -> f64 {
        match self {
            DriftFn::InverseSqrt { gamma } => gamma / (n as f64).sqrt(),
            DriftFn::Table { start, values } => {
                let idx = n
                    .checked_sub(*start)
                    .expect("drift table evaluated below its start");
                values[idx as usize]
            }
        }
    }
}

/// Evaluation window `[ceil(alpha N), floor(beta N)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub alpha: f64,
    pub beta: f64,
    pub scale: u64,
}

impl Window {
    pub fn lo(&self) -> u64 {
        (self.alpha * self.scale as f64).ceil() as u64
    }

    pub fn hi(&self) -> u64 {
        (self.beta * self.scale as f64).floor() as u64
    }
}

/// A drifted sample-mean process restricted to a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftProcessSpec {
    pub g: DriftFn,
    pub window: Window,
    /// Standard deviation of one increment.
    pub sigma_x: f64,
    /// Universal sub-Gaussian constant; only the sub-Gaussian bound reads it.
    pub c_tilde: f64,
}

impl DriftProcessSpec {
    pub fn validate(&self) -> Result<()> {
        let w = &self.window;
        if !(w.alpha > 0.0 && w.alpha < w.beta && w.beta <= 1.0) {
            return Err(Error::config(
                "window",
                format!("need 0 < alpha < beta <= 1, got ({}, {})", w.alpha, w.beta),
            ));
        }
        if w.scale == 0 {
            return Err(Error::config("scale", "must be positive"));
        }
        let (lo, hi) = (w.lo(), w.hi());
        if lo == 0 || lo > hi {
            return Err(Error::EmptyWindow {
                alpha: w.alpha,
                beta: w.beta,
                scale: w.scale,
            });
        }
        if !self.sigma_x.is_finite() || self.sigma_x <= 0.0 {
            return Err(Error::config("sigma_x", "must be > 0"));
        }
        for n in lo..hi {
            if self.g.eval(n + 1) > self.g.eval(n) + 1e-12 {
                return Err(Error::config(
                    "g",
                    format!("drift must be nonincreasing on the window; rises at n = {n}"),
                ));
            }
        }
        Ok(())
    }
}

/// `E|V|` for `V ~ N(mu, sigma²)`:
/// `σ sqrt(2/π) exp(-μ²/(2σ²)) + μ (1 - 2Φ(-μ/σ))`.
pub fn folded_normal_mean(mu: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "folded normal needs sigma > 0");
    sigma * SQRT_2_OVER_PI * (-mu * mu / (2.0 * sigma * sigma)).exp()
        + mu * (1.0 - 2.0 * norm_cdf(-mu / sigma))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::config("lambda", format!("must be > 0, got {lambda}")));
    }
    Ok(())
}

/// Exact-Gaussian instantiation of the maximal bound:
/// `( E|X̄_hi + g(hi)| + Σ_{k=lo}^{hi-1} [ E|X̄_k|/(k+1) + |g(k+1)-g(k)| ] ) / λ`
/// with every expectation a folded-normal mean (`X̄_k ~ N(0, σ_X²/k)`).
pub fn maximal_bound_gaussian(spec: &DriftProcessSpec, lambda: f64) -> Result<f64> {
    spec.validate()?;
    check_lambda(lambda)?;
    let (lo, hi) = (spec.window.lo(), spec.window.hi());

    let terminal = folded_normal_mean(spec.g.eval(hi), spec.sigma_x / (hi as f64).sqrt());
    let mut sum = 0.0;
    for k in lo..hi {
        let kf = k as f64;
        let mean_abs = spec.sigma_x * SQRT_2_OVER_PI / kf.sqrt();
        sum += mean_abs / (kf + 1.0) + (spec.g.eval(k + 1) - spec.g.eval(k)).abs();
    }
    Ok((terminal + sum) / lambda)
}

/// Sub-Gaussian maximal bound with universal constant `C̃`:
///
/// ```text
/// ( (C̃ sqrt(2/π) e^{-N g(hi)²/2} + 2C̃)/sqrt(N)
///   + (g(lo) - g(hi))
///   + g(hi) (1 - 2Φ(-sqrt(N) g(hi)/σ_X))
///   + Σ_{k=lo}^{hi-1} sqrt(2/π) / ((k+1) sqrt(k)) ) / λ
/// ```
pub fn maximal_bound_subgaussian(spec: &DriftProcessSpec, lambda: f64) -> Result<f64> {
    spec.validate()?;
    check_lambda(lambda)?;
    if spec.c_tilde.is_nan() || spec.c_tilde <= 0.0 {
        return Err(Error::config("c_tilde", "must be > 0"));
    }
    let (lo, hi) = (spec.window.lo(), spec.window.hi());
    let scale = spec.window.scale as f64;
    let g_hi = spec.g.eval(hi);
    let g_lo = spec.g.eval(lo);

    let head = (spec.c_tilde * SQRT_2_OVER_PI * (-scale * g_hi * g_hi / 2.0).exp()
        + 2.0 * spec.c_tilde)
        / scale.sqrt();
    let drift_span = g_lo - g_hi;
    let terminal = g_hi * (1.0 - 2.0 * norm_cdf(-scale.sqrt() * g_hi / spec.sigma_x));
    let mut tail = 0.0;
    for k in lo..hi {
        let kf = k as f64;
        tail += SQRT_2_OVER_PI / ((kf + 1.0) * kf.sqrt());
    }
    Ok((head + drift_span + terminal + tail) / lambda)
}

/// Per-replication maxima of `X̄_n + g(n)` over the window, with
/// i.i.d. `N(0, σ_X²)` increments. Chunked so the output is independent of
/// worker count.
pub fn mc_max_statistics(
    spec: &DriftProcessSpec,
    replications: u64,
    base_seed: u64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let (lo, hi) = (spec.window.lo(), spec.window.hi());
    const CHUNK: u64 = 128;
    let chunks = replications.div_ceil(CHUNK);
    let nested: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = derive_stream(base_seed, c, ROLE_MAXIMAL);
            let take = CHUNK.min(replications - c * CHUNK);
            (0..take)
                .map(|_| {
                    let mut sum = 0.0;
                    let mut max = f64::NEG_INFINITY;
                    for n in 1..=hi {
                        sum += spec.sigma_x * rng.standard_normal();
                        if n >= lo {
                            let q = sum / n as f64 + spec.g.eval(n);
                            if q > max {
                                max = q;
                            }
                        }
                    }
                    max
                })
                .collect()
        })
        .collect();
    Ok(nested.into_iter().flatten().collect())
}

/// Monte Carlo estimate of `P( max_{lo ≤ n ≤ hi} (X̄_n + g(n)) ≥ λ )`.
pub fn mc_max_probability(
    spec: &DriftProcessSpec,
    lambda: f64,
    replications: u64,
    base_seed: u64,
) -> Result<McEstimate> {
    let maxima = mc_max_statistics(spec, replications, base_seed)?;
    let hits = maxima.iter().filter(|&&m| m >= lambda).count() as u64;
    Ok(McEstimate::from_indicator(hits, replications))
}

/// Verifies the one-step algebraic identity behind the bound:
/// `X̄_{n+1} + g(n+1) = (X̄_n + g(n)) + (X_{n+1} - X̄_n)/(n+1) + (g(n+1) - g(n))`
/// to 1e-12, where `n = samples.len() - 1`.
pub fn doob_decomposition_check(g: &DriftFn, samples: &[f64]) -> bool {
    if samples.len() < 2 {
        return false;
    }
    let n = samples.len() - 1;
    let mean_n = samples[..n].iter().sum::<f64>() / n as f64;
    let mean_n1 = samples.iter().sum::<f64>() / (n + 1) as f64;
    let lhs = mean_n1 + g.eval(n as u64 + 1);
    let rhs = (mean_n + g.eval(n as u64))
        + (samples[n] - mean_n) / (n + 1) as f64
        + (g.eval(n as u64 + 1) - g.eval(n as u64));
    (lhs - rhs).abs() <= 1e-12
}

/// Smallest `c` in `c_grid` for which the Gaussian bound at `λ = c/sqrt(N)`
/// over the window `[N/16, N]` drops below `target`.
pub fn smallest_dominating_threshold(
    gamma: f64,
    scale: u64,
    sigma_x: f64,
    target: f64,
    c_grid: &[f64],
) -> Result<Option<f64>> {
    let spec = DriftProcessSpec {
        g: DriftFn::InverseSqrt { gamma },
        window: Window {
            alpha: 1.0 / 16.0,
            beta: 1.0,
            scale,
        },
        sigma_x,
        c_tilde: 1.0,
    };
    for &c in c_grid {
        let lambda = c / (scale as f64).sqrt();
        if maximal_bound_gaussian(&spec, lambda)? < target {
            return Ok(Some(c));
        }
    }
    Ok(None)
}
