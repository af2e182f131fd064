//! Two-epoch batched bandit designs and their limiting distributions.
//!
//! All three designs share the same skeleton on two arms: epoch one assigns
//! each of `T/2` rounds to arm 0 with probability 1/2, then the design maps
//! epoch-one statistics to a single second-epoch probability `p₂`, and epoch
//! two assigns each of the remaining `T/2` rounds to arm 0 with probability
//! `p₂`:
//!
//! ```text
//! ETC        p₂ = 1 - ε/2  if  μ̂₀ ≥ μ̂₁,  else ε/2
//! UCB        p₂ = π_max    if  μ̂₀ + sqrt(ln(T/4)/n₀) ≥ μ̂₁ + sqrt(ln(T/4)/n₁),
//!                          else 1 - π_max
//! Thompson   p₂ = clip(P(β̃₀ > β̃₁ | epoch one), π_min, π_max)
//! ```
//!
//! Because `p₂` is a non-degenerate function of epoch-one data even when the
//! arms are identical, the standardized error `sqrt(n₀_T) (μ̂₀_T - μ₀)` does
//! not converge to a normal law; [`sample_limit_y`] draws exactly from the
//! limit it does converge to.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{derive_stream, ArmState, RewardModel, RngStream, ROLE_BATCHED, ROLE_LIMIT};
use crate::stats::norm_cdf;
use crate::{Error, Result};

/// Two-epoch design selector and parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum BatchedKind {
    /// ε-greedy explore-then-commit, ε ∈ (0, 1].
    Etc { epsilon: f64 },
    /// Batched UCB, π_max ∈ (1/2, 1).
    Ucb { pi_max: f64 },
    /// Batched Thompson sampling with clipped posterior probability,
    /// 0 < π_min ≤ π_max < 1.
    Thompson { pi_min: f64, pi_max: f64 },
}

impl BatchedKind {
    pub fn name(&self) -> &'static str {
        match self {
            BatchedKind::Etc { .. } => "etc_batched",
            BatchedKind::Ucb { .. } => "ucb_batched",
            BatchedKind::Thompson { .. } => "thompson_batched",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BatchedKind::Etc { epsilon } => {
                if !(epsilon > 0.0 && epsilon <= 1.0) {
                    return Err(Error::config(
                        "epsilon",
                        format!("etc_batched requires epsilon in (0, 1], got {epsilon}"),
                    ));
                }
            }
            BatchedKind::Ucb { pi_max } => {
                if !(pi_max > 0.5 && pi_max < 1.0) {
                    return Err(Error::config(
                        "pi_max",
                        format!("ucb_batched requires pi_max in (1/2, 1), got {pi_max}"),
                    ));
                }
            }
            BatchedKind::Thompson { pi_min, pi_max } => {
                if !(pi_min > 0.0 && pi_min <= pi_max && pi_max < 1.0) {
                    return Err(Error::config(
                        "pi_min",
                        format!(
                            "thompson_batched requires 0 < pi_min <= pi_max < 1, got ({pi_min}, {pi_max})"
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A batched design over an even horizon of at least 4 rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchedSpec {
    pub kind: BatchedKind,
    pub horizon: u64,
}

impl BatchedSpec {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.horizon < 4 || !self.horizon.is_multiple_of(2) {
            return Err(Error::config(
                "horizon",
                format!("batched designs need an even horizon >= 4, got {}", self.horizon),
            ));
        }
        Ok(())
    }
}

/// Per-arm (pulls, mean) at a cut point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub pulls: [u64; 2],
    pub mean: [f64; 2],
}

impl EpochStats {
    fn from_states(states: &[ArmState; 2]) -> Self {
        EpochStats {
            pulls: [states[0].pulls(), states[1].pulls()],
            mean: [states[0].mean(), states[1].mean()],
        }
    }
}

/// Outcome of one batched run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchedResult {
    pub epoch1: EpochStats,
    pub total: EpochStats,
    /// Realized second-epoch probability of arm 0.
    pub p2: f64,
    /// Epoch-one assignment sequences rejected because an arm was unsampled.
    pub assignment_redraws: u64,
}

/// Posterior probability that arm 0 beats arm 1 under independent standard
/// normal priors and a Gaussian likelihood with known `sigma`:
/// the posterior of each mean is `N(n m / (n + σ²), σ² / (n + σ²))`.
pub fn posterior_prob_arm1(n1: u64, n2: u64, m1: f64, m2: f64, sigma: f64) -> f64 {
    assert!(n1 >= 1 && n2 >= 1, "posterior needs at least one pull per arm");
    assert!(sigma > 0.0);
    let s2 = sigma * sigma;
    let post = |n: u64, m: f64| {
        let nf = n as f64;
        (nf * m / (nf + s2), s2 / (nf + s2))
    };
    let (mu1, v1) = post(n1, m1);
    let (mu2, v2) = post(n2, m2);
    norm_cdf((mu1 - mu2) / (v1 + v2).sqrt())
}

/// Runs one batched episode on exactly two arms.
///
/// If an epoch-one assignment sequence leaves an arm unsampled (probability
/// `2^(1 - T/2)`) the assignment sequence is rejected and redrawn; the redraw
/// count is reported in the result.
pub fn run_batched(
    spec: &BatchedSpec,
    rewards: &[RewardModel; 2],
    rng: &mut RngStream,
) -> Result<BatchedResult> {
    spec.validate()?;
    for model in rewards {
        model.validate()?;
    }
    let half = spec.horizon / 2;

    let mut assignment_redraws = 0u64;
    let assignments: Vec<bool> = loop {
        let draw: Vec<bool> = (0..half).map(|_| rng.random_bool(0.5)).collect();
        let ones = draw.iter().filter(|&&a| a).count() as u64;
        if ones > 0 && ones < half {
            break draw;
        }
        assignment_redraws += 1;
    };

    let mut states = [ArmState::new(), ArmState::new()];
    for &to_arm0 in &assignments {
        let arm = usize::from(!to_arm0);
        states[arm].record(rewards[arm].sample(rng));
    }
    let epoch1 = EpochStats::from_states(&states);

    // Ties favour arm 0 throughout (measure-zero for continuous rewards).
    let p2 = match spec.kind {
        BatchedKind::Etc { epsilon } => {
            if epoch1.mean[0] >= epoch1.mean[1] {
                1.0 - epsilon / 2.0
            } else {
                epsilon / 2.0
            }
        }
        BatchedKind::Ucb { pi_max } => {
            let quarter_log = (spec.horizon as f64 / 4.0).ln();
            let index = |arm: usize| {
                epoch1.mean[arm] + (quarter_log / epoch1.pulls[arm] as f64).sqrt()
            };
            if index(0) >= index(1) {
                pi_max
            } else {
                1.0 - pi_max
            }
        }
        BatchedKind::Thompson { pi_min, pi_max } => posterior_prob_arm1(
            epoch1.pulls[0],
            epoch1.pulls[1],
            epoch1.mean[0],
            epoch1.mean[1],
            1.0,
        )
        .clamp(pi_min, pi_max),
    };

    for _ in 0..half {
        let arm = usize::from(!rng.random_bool(p2));
        states[arm].record(rewards[arm].sample(rng));
    }

    Ok(BatchedResult {
        epoch1,
        total: EpochStats::from_states(&states),
        p2,
        assignment_redraws,
    })
}

/// Runs `replications` independent batched episodes, one derived stream per
/// replication. Output order is by replication index, independent of worker
/// count.
pub fn run_batched_ensemble(
    spec: &BatchedSpec,
    rewards: &[RewardModel; 2],
    replications: u64,
    base_seed: u64,
) -> Result<Vec<BatchedResult>> {
    spec.validate()?;
    (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = derive_stream(base_seed, rep, ROLE_BATCHED);
            run_batched(spec, rewards, &mut rng).map_err(|e| Error::Replication {
                replication: rep,
                source: Box::new(e),
            })
        })
        .collect()
}

/// `sqrt(pulls) * (mean - true_mean)` for one arm of a batched result.
pub fn standardized_error(result: &BatchedResult, true_mean: f64, arm: usize) -> Result<f64> {
    let pulls = result.total.pulls[arm];
    if pulls == 0 {
        return Err(Error::ZeroPulls { arm });
    }
    Ok((pulls as f64).sqrt() * (result.total.mean[arm] - true_mean))
}

/// Parameters of a limit-distribution sampler; kinds and ranges mirror
/// [`BatchedSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSampleSpec {
    pub kind: BatchedKind,
}

impl LimitSampleSpec {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            BatchedKind::Etc { .. } => "limit_etc",
            BatchedKind::Ucb { .. } => "limit_ucb_batched",
            BatchedKind::Thompson { .. } => "limit_thompson_batched",
        }
    }
}

/// One exact draw from the design's limiting distribution `Y`.
///
/// For the Thompson design the clip point `π_*` is itself random: the
/// posterior probability of the leading arm converges to Uniform(0, 1) for
/// identical arms, so `π_* ~ U(0, 1)` clipped into `[π_min, π_max]`.
pub fn sample_limit_y(spec: &LimitSampleSpec, rng: &mut RngStream) -> f64 {
    let z1 = rng.standard_normal();
    let z2 = rng.standard_normal();
    let z3 = rng.standard_normal();
    match spec.kind {
        BatchedKind::Etc { epsilon } => {
            if z1 > z2 {
                (1.0 / (3.0 - epsilon)).sqrt() * (z1 - (2.0 - epsilon).sqrt() * z3)
            } else {
                (1.0 / (1.0 + epsilon)).sqrt() * (z1 - epsilon.sqrt() * z3)
            }
        }
        BatchedKind::Ucb { pi_max } => {
            if z1 > z2 {
                (0.5 / (0.5 + pi_max)).sqrt() * z1 + (pi_max / (0.5 + pi_max)).sqrt() * z3
            } else {
                (0.5 / (1.5 - pi_max)).sqrt() * z1
                    + ((1.0 - pi_max) / (1.5 - pi_max)).sqrt() * z3
            }
        }
        BatchedKind::Thompson { pi_min, pi_max } => {
            let z4 = rng.standard_normal();
            let pi: f64 = rng.random_range(0.0..1.0f64).clamp(pi_min, pi_max);
            let lead = ((1.5 - pi) / (1.0 + 2.0 * pi)).sqrt()
                * (0.5f64.sqrt() * z1 + pi.sqrt() * z3);
            let lag = ((0.5 + pi) / (3.0 - 2.0 * pi)).sqrt()
                * (0.5f64.sqrt() * z2 + (1.0 - pi).sqrt() * z4);
            lead - lag
        }
    }
}

/// Draws `n` limit samples deterministically, chunked so the result is
/// independent of worker count.
pub fn sample_limit_ensemble(spec: &LimitSampleSpec, n: u64, base_seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    const CHUNK: u64 = 4096;
    let chunks = n.div_ceil(CHUNK);
    let nested: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = derive_stream(base_seed, c, ROLE_LIMIT);
            let take = CHUNK.min(n - c * CHUNK);
            (0..take).map(|_| sample_limit_y(spec, &mut rng)).collect()
        })
        .collect();
    Ok(nested.into_iter().flatten().collect())
}
