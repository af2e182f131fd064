//! Reward models, deterministic RNG streams, and the generic episode engine.
//!
//! An episode pulls each arm once in index order and then hands control to
//! the policy's select/update loop until the horizon is reached. All
//! randomness flows through [`RngStream`]s derived from a base seed, a
//! replication index, and a role tag, so replicated experiments are
//! reproducible bit-for-bit regardless of how work is scheduled.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::index_policies::{select_arm, IndexContext, PolicySpec};
use crate::{Error, Result};

/// Stream role for episode reward draws.
pub const ROLE_EPISODE: u32 = 0;
/// Stream role for batched-design draws (assignments, rewards, posteriors).
pub const ROLE_BATCHED: u32 = 1;
/// Stream role for limit-distribution samplers.
pub const ROLE_LIMIT: u32 = 2;
/// Stream role for maximal-inequality Monte Carlo.
pub const ROLE_MAXIMAL: u32 = 3;
/// Stream role for generic sampling helpers.
pub const ROLE_SAMPLING: u32 = 4;

/// Identifier for the stream-derivation scheme, recorded in run manifests.
pub const RNG_ALGORITHM: &str =
    "chacha12: key = splitmix64-expanded base seed, stream = (replication << 16) | role";

/// A reward distribution attached to one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RewardModel {
    Gaussian { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

impl RewardModel {
    pub fn standard_normal() -> Self {
        RewardModel::Gaussian { mean: 0.0, sd: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RewardModel::Gaussian { mean, sd } => {
                if !mean.is_finite() {
                    return Err(Error::config("reward.mean", "must be finite"));
                }
                if !sd.is_finite() || sd <= 0.0 {
                    return Err(Error::config("reward.sd", format!("must be > 0, got {sd}")));
                }
            }
            RewardModel::Bernoulli { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::config("reward.p", format!("must be in [0, 1], got {p}")));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RewardModel::Gaussian { mean, .. } => mean,
            RewardModel::Bernoulli { p } => p,
        }
    }

    /// Standard deviation of the model itself.
    pub fn sd(&self) -> f64 {
        match *self {
            RewardModel::Gaussian { sd, .. } => sd,
            RewardModel::Bernoulli { p } => (p * (1.0 - p)).sqrt(),
        }
    }

    /// One i.i.d. draw; advances the stream.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            RewardModel::Gaussian { mean, sd } => {
                Normal::new(mean, sd).expect("validated parameters").sample(rng)
            }
            RewardModel::Bernoulli { p } => {
                if rng.random_bool(p) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Identity of a derived stream: (base seed, replication, role).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub base_seed: u64,
    pub replication: u64,
    pub role: u32,
}

/// A counter-derived random stream.
///
/// Streams with distinct ids never overlap: ChaCha keystreams under the same
/// key are disjoint across stream words, and the (replication, role) packing
/// is injective for `replication < 2^48`, `role < 2^16`.
#[derive(Debug, Clone)]
pub struct RngStream {
    id: StreamId,
    rng: ChaCha12Rng,
}

/// Deterministically derives the stream for one (replication, role) pair.
pub fn derive_stream(base_seed: u64, replication: u64, role: u32) -> RngStream {
    assert!(replication < 1 << 48, "replication index exceeds stream space");
    assert!(role < 1 << 16, "role tag exceeds stream space");
    let mut rng = ChaCha12Rng::seed_from_u64(base_seed);
    rng.set_stream((replication << 16) | u64::from(role));
    RngStream {
        id: StreamId {
            base_seed,
            replication,
            role,
        },
        rng,
    }
}

impl RngStream {
    pub fn id(&self) -> StreamId {
        self.id
    }

    /// One standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        Normal::new(0.0, 1.0).unwrap().sample(self)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest);
    }
}

/// Running statistics for one arm within an episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pulls: u64,
    sum: f64,
    sum_sq: f64,
}

impl ArmState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a state directly from (pulls, mean); useful for probing indices.
    pub fn with_stats(pulls: u64, mean: f64) -> Self {
        ArmState {
            pulls,
            sum: mean * pulls as f64,
            sum_sq: mean * mean * pulls as f64,
        }
    }

    pub fn record(&mut self, reward: f64) {
        self.pulls += 1;
        self.sum += reward;
        self.sum_sq += reward * reward;
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    pub fn is_initialized(&self) -> bool {
        self.pulls > 0
    }

    /// Sample mean; 0.0 sentinel while the arm is unpulled.
    pub fn mean(&self) -> f64 {
        if self.pulls == 0 {
            0.0
        } else {
            self.sum / self.pulls as f64
        }
    }

    /// Unbiased sample variance; 0.0 with fewer than two pulls.
    pub fn sample_variance(&self) -> f64 {
        if self.pulls < 2 {
            return 0.0;
        }
        let n = self.pulls as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }
}

/// Terminal per-arm summary of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub pulls: u64,
    pub mean: f64,
    pub sample_variance: f64,
}

/// Pull counts recorded at one configured checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: u64,
    pub pulls: Vec<u64>,
}

/// Terminal statistics of one simulated horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub arms: Vec<ArmSummary>,
    pub regret: f64,
    pub checkpoints: Vec<Checkpoint>,
    pub stream: StreamId,
}

impl EpisodeResult {
    pub fn total_pulls(&self) -> u64 {
        self.arms.iter().map(|a| a.pulls).sum()
    }

    /// Fraction of pulls that went to `arm`.
    pub fn pull_fraction(&self, arm: usize) -> f64 {
        self.arms[arm].pulls as f64 / self.total_pulls() as f64
    }
}

/// Cumulative regret implied by terminal pull counts:
/// `Σ_a (max μ − μ_a) · pulls_a`.
pub fn regret(result: &EpisodeResult, means: &[f64]) -> Result<f64> {
    if means.len() != result.arms.len() {
        return Err(Error::LengthMismatch {
            expected: result.arms.len(),
            found: means.len(),
        });
    }
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(result
        .arms
        .iter()
        .zip(means)
        .map(|(a, &mu)| (best - mu) * a.pulls as f64)
        .sum())
}

fn validate_checkpoints(checkpoints: &[u64], horizon: u64) -> Result<()> {
    for pair in checkpoints.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::config(
                "checkpoints",
                "must be strictly increasing",
            ));
        }
    }
    if let Some(&last) = checkpoints.last() {
        if last > horizon {
            return Err(Error::config(
                "checkpoints",
                format!("checkpoint {last} exceeds horizon {horizon}"),
            ));
        }
    }
    Ok(())
}

/// Runs one episode: pull every arm once in index order during rounds
/// `1..=K`, then apply the policy's select/update loop for rounds
/// `K+1..=T`.
pub fn run_episode(
    models: &[RewardModel],
    policy: &PolicySpec,
    horizon: u64,
    rng: &mut RngStream,
    checkpoints: &[u64],
) -> Result<EpisodeResult> {
    let k = models.len();
    if k < 2 {
        return Err(Error::config("arms", format!("need at least 2 arms, got {k}")));
    }
    if horizon < k as u64 {
        return Err(Error::config(
            "horizon",
            format!("horizon {horizon} is shorter than the initialization round for {k} arms"),
        ));
    }
    for model in models {
        model.validate()?;
    }
    policy.validate(k)?;
    validate_checkpoints(checkpoints, horizon)?;

    let mut states = vec![ArmState::new(); k];
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = 0usize;

    for round in 1..=horizon {
        let arm = if round <= k as u64 {
            (round - 1) as usize
        } else {
            let ctx = IndexContext {
                t: round - 1,
                horizon,
                states: &states,
            };
            select_arm(policy, &ctx)?
        };
        let reward = models[arm].sample(rng);
        states[arm].record(reward);

        if next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == round {
            snapshots.push(Checkpoint {
                round,
                pulls: states.iter().map(ArmState::pulls).collect(),
            });
            next_checkpoint += 1;
        }
    }

    let arms: Vec<ArmSummary> = states
        .iter()
        .map(|s| ArmSummary {
            pulls: s.pulls(),
            mean: s.mean(),
            sample_variance: s.sample_variance(),
        })
        .collect();
    let means: Vec<f64> = models.iter().map(RewardModel::mean).collect();
    let mut result = EpisodeResult {
        arms,
        regret: 0.0,
        checkpoints: snapshots,
        stream: rng.id(),
    };
    result.regret = regret(&result, &means)?;
    Ok(result)
}
