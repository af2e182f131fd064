//! Replicated Monte Carlo ensembles and the reports derived from them.
//!
//! A stable policy pulls each of K identical arms close to `T/K` times, so
//! the reports here all measure departures from that reference:
//!
//! - [`stability_report`] — distribution of `n_a,T / (T/K)` and the
//!   histogram of the arm-0 pull fraction `n_0,T / T`.
//! - [`wald_coverage`] — empirical coverage of `μ̂ ± z σ/sqrt(n)`;
//!   undercoverage signals that the CLT has failed for the sample means.
//! - [`witness_probability`] — the event
//!   `{ n_0,T/T ≥ (K+1)/(2K), n_a,T/T ≤ 1/(2K) for a ≥ 1 }`, which has
//!   asymptotically positive probability exactly when the policy is
//!   unstable.
//! - [`ks_normality`] / [`ks_two_sample`] — Kolmogorov–Smirnov distances
//!   with asymptotic p-values.
//!
//! [`run_ensemble`] fans replications out to the ambient rayon pool; every
//! replication owns a derived stream, so the ensemble is identical for any
//! worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{derive_stream, run_episode, EpisodeResult, RewardModel, ROLE_EPISODE};
use crate::index_policies::PolicySpec;
use crate::stats::{kolmogorov_sf, norm_cdf, norm_quantile, McEstimate};
use crate::{Error, Result};

/// How the Wald interval width is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum VarianceMode {
    /// Known reward standard deviation.
    Known { sigma: f64 },
    /// Per-episode plug-in sample standard deviation.
    PlugIn,
}

/// A replicated experiment: one policy, one environment, R episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub policy: PolicySpec,
    pub rewards: Vec<RewardModel>,
    pub horizon: u64,
    pub replications: u64,
    pub base_seed: u64,
    pub checkpoints: Vec<u64>,
    /// Confidence level for Wald intervals, in (0, 1).
    pub level: f64,
    pub variance_mode: VarianceMode,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications", "must be >= 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config(
                "level",
                format!("must be in (0, 1), got {}", self.level),
            ));
        }
        Ok(())
    }

    /// The checkpoint the witness tail event is evaluated at, `T/(2K)`.
    pub fn tail_checkpoint(&self) -> u64 {
        self.horizon / (2 * self.rewards.len() as u64)
    }
}

/// Runs the configured replications; replication `r` draws from
/// `derive_stream(base_seed, r, ROLE_EPISODE)`. Output order is by
/// replication index regardless of parallelism.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<Vec<EpisodeResult>> {
    config.validate()?;
    (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = derive_stream(config.base_seed, rep, ROLE_EPISODE);
            run_episode(
                &config.rewards,
                &config.policy,
                config.horizon,
                &mut rng,
                &config.checkpoints,
            )
            .map_err(|e| Error::Replication {
                replication: rep,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Fixed-edge histogram over `[lo, hi]`; the final bin is closed on the
/// right so boundary values are never dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn from_values(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Self {
        assert!(bins > 0 && lo < hi);
        let mut counts = vec![0u64; bins];
        let mut total = 0u64;
        let width = (hi - lo) / bins as f64;
        for v in values {
            let idx = (((v - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
            counts[idx] += 1;
            total += 1;
        }
        Histogram { lo, hi, counts, total }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.bins() as f64;
        (
            self.lo + width * bin as f64,
            self.lo + width * (bin + 1) as f64,
        )
    }

    pub fn mass(&self, bin: usize) -> f64 {
        self.counts[bin] as f64 / self.total as f64
    }

    /// Total mass of bins that overlap `[lo, hi]`.
    pub fn mass_overlapping(&self, lo: f64, hi: f64) -> f64 {
        (0..self.bins())
            .filter(|&b| {
                let (a, c) = self.edges(b);
                c > lo && a < hi
            })
            .map(|b| self.mass(b))
            .sum()
    }
}

/// One band-probability row: `P(|n_arm/(T/K) - 1| > delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub arm: usize,
    pub delta: f64,
    pub probability: f64,
}

/// Empirical stability diagnostics against the reference allocation `T/K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Reference pull count `T/K`.
    pub pull_target: f64,
    pub rows: Vec<StabilityRow>,
    /// Histogram of the arm-0 pull fraction `n_0,T / T`, 50 bins over [0, 1]
    /// by default.
    pub histogram: Histogram,
    pub mean_pulls: Vec<f64>,
}

/// Stability diagnostics for an ensemble of identical-arm episodes.
pub fn stability_report(
    ensemble: &[EpisodeResult],
    horizon: u64,
    deltas: &[f64],
    bins: usize,
) -> Result<StabilityReport> {
    let first = ensemble.first().ok_or(Error::TooFewSamples { needed: 1, found: 0 })?;
    let arms = first.arms.len();
    let target = horizon as f64 / arms as f64;
    let r = ensemble.len() as f64;

    let mut rows = Vec::with_capacity(arms * deltas.len());
    for arm in 0..arms {
        for &delta in deltas {
            let hits = ensemble
                .iter()
                .filter(|ep| (ep.arms[arm].pulls as f64 / target - 1.0).abs() > delta)
                .count();
            rows.push(StabilityRow {
                arm,
                delta,
                probability: hits as f64 / r,
            });
        }
    }

    let histogram = Histogram::from_values(
        ensemble.iter().map(|ep| ep.arms[0].pulls as f64 / horizon as f64),
        0.0,
        1.0,
        bins,
    );

    let mean_pulls = (0..arms)
        .map(|arm| ensemble.iter().map(|ep| ep.arms[arm].pulls as f64).sum::<f64>() / r)
        .collect();

    Ok(StabilityReport {
        pull_target: target,
        rows,
        histogram,
        mean_pulls,
    })
}

/// Empirical coverage of the Wald interval for one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub arm: usize,
    pub level: f64,
    pub coverage: f64,
    pub mc_se: f64,
    pub mean_width: f64,
    /// Replications that pulled the arm at least once.
    pub used: u64,
    /// Replications excluded for a zero pull count.
    pub excluded: u64,
}

/// Coverage of `|μ̂ - μ| ≤ z_{(1+level)/2} · σ̂ / sqrt(n)` across the
/// ensemble. Episodes that never pulled the arm are excluded and counted.
pub fn wald_coverage(
    ensemble: &[EpisodeResult],
    arm: usize,
    level: f64,
    true_mean: f64,
    mode: VarianceMode,
) -> Result<CoverageReport> {
    if ensemble.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, found: 0 });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config("level", format!("must be in (0, 1), got {level}")));
    }
    let z = norm_quantile(0.5 * (1.0 + level));
    let mut covered = 0u64;
    let mut used = 0u64;
    let mut excluded = 0u64;
    let mut width_sum = 0.0;
    for ep in ensemble {
        let a = &ep.arms[arm];
        if a.pulls == 0 {
            excluded += 1;
            continue;
        }
        let sd = match mode {
            VarianceMode::Known { sigma } => sigma,
            VarianceMode::PlugIn => a.sample_variance.sqrt(),
        };
        let half_width = z * sd / (a.pulls as f64).sqrt();
        width_sum += 2.0 * half_width;
        if (a.mean - true_mean).abs() <= half_width {
            covered += 1;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::ZeroPulls { arm });
    }
    let coverage = covered as f64 / used as f64;
    Ok(CoverageReport {
        arm,
        level,
        coverage,
        mc_se: (coverage * (1.0 - coverage) / used as f64).sqrt(),
        mean_width: width_sum / used as f64,
        used,
        excluded,
    })
}

/// Estimates of the instability-witness event and the mid-episode tail
/// event it is conditioned on in the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub arms: usize,
    /// Arm-0 fraction threshold `(K+1)/(2K)`.
    pub upper_threshold: f64,
    /// Other-arm fraction threshold `1/(2K)`.
    pub lower_threshold: f64,
    pub witness: McEstimate,
    /// The round `T/(2K)` the tail event is evaluated at.
    pub tail_checkpoint: u64,
    /// `P(n_a at T/(2K) ∈ [T/(4K²), 3T/(4K²)] for all a)`; `None` with a
    /// warning flag when the checkpoint was not recorded.
    pub tail: Option<McEstimate>,
    pub tail_checkpoint_missing: bool,
}

/// Witness probability `P(n_0,T/T ≥ (K+1)/(2K) and n_a,T/T ≤ 1/(2K) ∀a≥1)`.
pub fn witness_probability(ensemble: &[EpisodeResult]) -> Result<WitnessReport> {
    let first = ensemble.first().ok_or(Error::TooFewSamples { needed: 1, found: 0 })?;
    let arms = first.arms.len();
    let horizon = first.total_pulls();
    let k = arms as f64;
    let upper = (k + 1.0) / (2.0 * k);
    let lower = 1.0 / (2.0 * k);

    let hits = ensemble
        .iter()
        .filter(|ep| {
            let t = ep.total_pulls() as f64;
            ep.arms[0].pulls as f64 / t >= upper
                && ep.arms[1..].iter().all(|a| a.pulls as f64 / t <= lower)
        })
        .count() as u64;
    let witness = McEstimate::from_indicator(hits, ensemble.len() as u64);

    let tail_checkpoint = horizon / (2 * arms as u64);
    let window_lo = horizon as f64 / (4.0 * k * k);
    let window_hi = 3.0 * horizon as f64 / (4.0 * k * k);
    let mut tail_hits = 0u64;
    let mut tail_seen = 0u64;
    for ep in ensemble {
        let Some(cp) = ep.checkpoints.iter().find(|c| c.round == tail_checkpoint) else {
            continue;
        };
        tail_seen += 1;
        if cp
            .pulls
            .iter()
            .all(|&n| n as f64 >= window_lo && n as f64 <= window_hi)
        {
            tail_hits += 1;
        }
    }
    let tail_checkpoint_missing = tail_seen != ensemble.len() as u64;
    let tail = if tail_checkpoint_missing {
        None
    } else {
        Some(McEstimate::from_indicator(tail_hits, tail_seen))
    };

    Ok(WitnessReport {
        arms,
        upper_threshold: upper,
        lower_threshold: lower,
        witness,
        tail_checkpoint,
        tail,
        tail_checkpoint_missing,
    })
}

/// A Kolmogorov–Smirnov statistic with its asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("NaN in KS input"));
    v
}

/// One-sample KS test against the standard normal. Intended for 100+
/// values; the p-value uses the asymptotic Kolmogorov distribution.
pub fn ks_normality(values: &[f64]) -> Result<KsTest> {
    if values.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, found: 0 });
    }
    let xs = sorted(values);
    let n = xs.len() as f64;
    let mut stat = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = norm_cdf(x);
        let hi = (i as f64 + 1.0) / n - cdf;
        let lo = cdf - i as f64 / n;
        stat = stat.max(hi).max(lo);
    }
    Ok(KsTest {
        statistic: stat,
        p_value: kolmogorov_sf(n.sqrt() * stat),
    })
}

/// Two-sample KS test with the asymptotic p-value at effective size
/// `nm/(n+m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooFewSamples {
            needed: 1,
            found: 0,
        });
    }
    let xs = sorted(a);
    let ys = sorted(b);
    let (n, m) = (xs.len(), ys.len());
    let mut stat = 0.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        let x = xs[i];
        let y = ys[j];
        let v = x.min(y);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        stat = stat.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    Ok(KsTest {
        statistic: stat,
        p_value: kolmogorov_sf(eff.sqrt() * stat),
    })
}
