//! Experiment configuration: TOML ingestion, defaults, and validation.
//!
//! A config is a flat key-value document. The experiment type is chosen by
//! `kind` (`ensemble`, `batched`, or `concentration`); when omitted it is
//! inferred from the policy name, and a minimal document like
//! `policy = "moss"` expands to the full default protocol (two standard
//! normal arms, T = 10000, R = 5000, 95% level, 50 histogram bins).
//!
//! `run` also accepts a manifest JSON produced by an earlier run: the
//! resolved config embedded in it is executed as-is, which reproduces the
//! original outputs byte for byte.

use anyhow::{anyhow, bail, Context, Result};
use banditlab::batched::{BatchedKind, BatchedSpec, LimitSampleSpec};
use banditlab::diagnostics::{EnsembleConfig, VarianceMode};
use banditlab::env::RewardModel;
use banditlab::index_policies::{KlSettings, PolicyKind, PolicySpec};
use banditlab::kl_policies::{KlFamily, MeanInterval};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_HORIZON: u64 = 10_000;
pub const DEFAULT_REPLICATIONS: u64 = 5_000;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Ensemble policies addressable from configs.
pub const ENSEMBLE_POLICIES: [&str; 13] = [
    "ucb1",
    "moss",
    "anytime_moss",
    "vanilla_moss",
    "oc_ucb",
    "ada_ucb",
    "kl_ucb",
    "kl_moss",
    "kl_ucb_pp",
    "kl_ucb_switch",
    "anytime_kl_ucb_switch",
    "round_robin",
    "always_arm",
];

/// Batched designs and their limit-law samplers.
pub const BATCHED_POLICIES: [&str; 6] = [
    "etc_batched",
    "ucb_batched",
    "thompson_batched",
    "limit_etc",
    "limit_ucb_batched",
    "limit_thompson_batched",
];

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Option<String>,
    name: Option<String>,
    policy: Option<String>,
    arms: Option<usize>,
    reward: Option<Vec<RewardModel>>,
    horizon: Option<u64>,
    replications: Option<u64>,
    seed: Option<u64>,
    level: Option<f64>,
    bins: Option<usize>,
    sigma: Option<f64>,
    variance_mode: Option<String>,
    epsilon: Option<f64>,
    arm: Option<usize>,
    pi_min: Option<f64>,
    pi_max: Option<f64>,
    kl_interval: Option<[f64; 2]>,
    checkpoints: Option<Vec<u64>>,
    delta_grid: Option<Vec<f64>>,
    limit_draws: Option<u64>,
    scale: Option<u64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    sigma_x: Option<f64>,
    c_tilde: Option<f64>,
    lambdas: Option<Vec<f64>>,
}

/// A fully resolved experiment, as echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Ensemble(EnsembleExperiment),
    Batched(BatchedExperiment),
    Concentration(ConcentrationExperiment),
}

impl ExperimentConfig {
    pub fn name(&self) -> &str {
        match self {
            ExperimentConfig::Ensemble(e) => &e.name,
            ExperimentConfig::Batched(e) => &e.name,
            ExperimentConfig::Concentration(e) => &e.name,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Ensemble(e) => e.seed,
            ExperimentConfig::Batched(e) => e.seed,
            ExperimentConfig::Concentration(e) => e.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::Ensemble(e) => e.seed = seed,
            ExperimentConfig::Batched(e) => e.seed = seed,
            ExperimentConfig::Concentration(e) => e.seed = seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleExperiment {
    pub name: String,
    pub policy: String,
    pub rewards: Vec<RewardModel>,
    pub horizon: u64,
    pub replications: u64,
    pub seed: u64,
    pub level: f64,
    pub bins: usize,
    pub sigma: f64,
    pub variance_mode: String,
    pub epsilon: f64,
    pub arm: usize,
    pub kl_interval: [f64; 2],
    pub checkpoints: Vec<u64>,
    pub delta_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchedExperiment {
    pub name: String,
    pub policy: String,
    pub rewards: Vec<RewardModel>,
    pub horizon: u64,
    pub replications: u64,
    pub seed: u64,
    pub bins: usize,
    pub epsilon: f64,
    pub pi_min: f64,
    pub pi_max: f64,
    pub limit_draws: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationExperiment {
    pub name: String,
    pub scale: u64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma_x: f64,
    pub c_tilde: f64,
    pub lambdas: Vec<f64>,
    pub replications: u64,
    pub seed: u64,
}

/// Reads an experiment from a TOML config or a manifest JSON.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let manifest: crate::manifest::Manifest = serde_json::from_str(&text)
            .with_context(|| format!("{} looks like a manifest but does not parse", path.display()))?;
        return Ok(manifest.config);
    }
    let raw: RawConfig = toml::from_str(&text)
        .with_context(|| format!("cannot parse config {}", path.display()))?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig> {
    let kind = match raw.kind.as_deref() {
        Some(k @ ("ensemble" | "batched" | "concentration")) => k.to_string(),
        Some(other) => bail!("unknown kind `{other}` (field `kind`); expected ensemble, batched, or concentration"),
        None => match raw.policy.as_deref() {
            Some(p) if BATCHED_POLICIES.contains(&p) => "batched".to_string(),
            _ if raw.lambdas.is_some() || raw.scale.is_some() => "concentration".to_string(),
            _ => "ensemble".to_string(),
        },
    };
    match kind.as_str() {
        "ensemble" => resolve_ensemble(raw).map(ExperimentConfig::Ensemble),
        "batched" => resolve_batched(raw).map(ExperimentConfig::Batched),
        _ => resolve_concentration(raw).map(ExperimentConfig::Concentration),
    }
}

fn default_rewards(arms: usize, sigma: f64) -> Vec<RewardModel> {
    vec![RewardModel::Gaussian { mean: 0.0, sd: sigma }; arms]
}

fn resolve_ensemble(raw: RawConfig) -> Result<EnsembleExperiment> {
    let policy = raw
        .policy
        .ok_or_else(|| anyhow!("missing `policy`; expected one of {ENSEMBLE_POLICIES:?}"))?;
    if !ENSEMBLE_POLICIES.contains(&policy.as_str()) {
        bail!("unknown policy `{policy}` (field `policy`); expected one of {ENSEMBLE_POLICIES:?}");
    }
    let horizon = raw.horizon.unwrap_or(DEFAULT_HORIZON);
    let sigma = raw.sigma.unwrap_or(DEFAULT_SIGMA);
    let rewards = match raw.reward {
        Some(list) => {
            if let Some(arms) = raw.arms {
                if arms != list.len() {
                    bail!(
                        "field `arms` ({arms}) disagrees with the {} [[reward]] entries",
                        list.len()
                    );
                }
            }
            list
        }
        None => default_rewards(raw.arms.unwrap_or(2), sigma),
    };
    if rewards.len() < 2 {
        bail!("field `arms`: need at least 2 arms, got {}", rewards.len());
    }
    for r in &rewards {
        r.validate().map_err(|e| anyhow!("{e}"))?;
    }
    let arms = rewards.len() as u64;
    let checkpoints = raw
        .checkpoints
        .unwrap_or_else(|| vec![horizon / (2 * arms)]);
    let variance_mode = raw.variance_mode.unwrap_or_else(|| "known".to_string());
    if !matches!(variance_mode.as_str(), "known" | "plugin") {
        bail!("unknown `variance_mode` `{variance_mode}`; expected known or plugin");
    }
    let exp = EnsembleExperiment {
        name: raw.name.unwrap_or_else(|| policy.clone()),
        policy,
        rewards,
        horizon,
        replications: raw.replications.unwrap_or(DEFAULT_REPLICATIONS),
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        level: raw.level.unwrap_or(DEFAULT_LEVEL),
        bins: raw.bins.unwrap_or(DEFAULT_BINS),
        sigma,
        variance_mode,
        epsilon: raw.epsilon.unwrap_or(DEFAULT_EPSILON),
        arm: raw.arm.unwrap_or(0),
        kl_interval: raw.kl_interval.unwrap_or([-10.0, 10.0]),
        checkpoints,
        delta_grid: raw
            .delta_grid
            .unwrap_or_else(|| vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5]),
    };
    // Surface range errors now rather than mid-run.
    exp.to_core().map(|_| exp)
}

fn resolve_batched(raw: RawConfig) -> Result<BatchedExperiment> {
    let policy = raw
        .policy
        .ok_or_else(|| anyhow!("missing `policy`; expected one of {BATCHED_POLICIES:?}"))?;
    if !BATCHED_POLICIES.contains(&policy.as_str()) {
        bail!("unknown policy `{policy}` (field `policy`); expected one of {BATCHED_POLICIES:?}");
    }
    let sigma = raw.sigma.unwrap_or(DEFAULT_SIGMA);
    let rewards = raw.reward.unwrap_or_else(|| default_rewards(2, sigma));
    if rewards.len() != 2 {
        bail!("batched designs use exactly 2 arms, got {} (field `reward`)", rewards.len());
    }
    let exp = BatchedExperiment {
        name: raw.name.unwrap_or_else(|| policy.clone()),
        policy,
        rewards,
        horizon: raw.horizon.unwrap_or(DEFAULT_HORIZON),
        replications: raw.replications.unwrap_or(DEFAULT_REPLICATIONS),
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        bins: raw.bins.unwrap_or(DEFAULT_BINS),
        epsilon: raw.epsilon.unwrap_or(DEFAULT_EPSILON),
        pi_min: raw.pi_min.unwrap_or(0.1),
        pi_max: raw.pi_max.unwrap_or(0.9),
        limit_draws: raw.limit_draws.unwrap_or(1_000_000),
    };
    exp.batched_kind()?;
    if !exp.is_sample_only() {
        exp.batched_spec()?;
    }
    Ok(exp)
}

fn resolve_concentration(raw: RawConfig) -> Result<ConcentrationExperiment> {
    let exp = ConcentrationExperiment {
        name: raw.name.unwrap_or_else(|| "concentration".to_string()),
        scale: raw.scale.unwrap_or(1600),
        alpha: raw.alpha.unwrap_or(1.0 / 16.0),
        beta: raw.beta.unwrap_or(1.0),
        gamma: raw.gamma.unwrap_or(1.0),
        sigma_x: raw.sigma_x.unwrap_or(1.0),
        c_tilde: raw.c_tilde.unwrap_or(1.0),
        lambdas: raw
            .lambdas
            .unwrap_or_else(|| (1..=10).map(|i| i as f64 / 10.0).collect()),
        replications: raw.replications.unwrap_or(100_000),
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
    };
    exp.drift_spec().map(|_| exp)
}

impl EnsembleExperiment {
    pub fn policy_spec(&self) -> Result<PolicySpec> {
        let kind = match self.policy.as_str() {
            "ucb1" => PolicyKind::Ucb1,
            "moss" => PolicyKind::Moss,
            "anytime_moss" => PolicyKind::AnytimeMoss,
            "vanilla_moss" => PolicyKind::VanillaMoss,
            "oc_ucb" => PolicyKind::OcUcb { epsilon: self.epsilon },
            "ada_ucb" => PolicyKind::AdaUcb,
            "kl_ucb" => PolicyKind::KlUcb,
            "kl_moss" => PolicyKind::KlMoss,
            "kl_ucb_pp" => PolicyKind::KlUcbPp,
            "kl_ucb_switch" => PolicyKind::KlUcbSwitch,
            "anytime_kl_ucb_switch" => PolicyKind::AnytimeKlUcbSwitch,
            "round_robin" => PolicyKind::RoundRobin,
            "always_arm" => PolicyKind::AlwaysArm { arm: self.arm },
            other => bail!("unknown policy `{other}` (field `policy`)"),
        };
        let spec = if kind.is_kl() {
            let all_bernoulli = self
                .rewards
                .iter()
                .all(|r| matches!(r, RewardModel::Bernoulli { .. }));
            let kl = if all_bernoulli {
                KlSettings::bernoulli()
            } else {
                KlSettings {
                    family: KlFamily::Gaussian { sigma: self.sigma },
                    interval: MeanInterval::new(self.kl_interval[0], self.kl_interval[1])
                        .map_err(|e| anyhow!("{e}"))?,
                }
            };
            PolicySpec::with_kl(kind, kl)
        } else {
            PolicySpec::new(kind)
        };
        spec.validate(self.rewards.len()).map_err(|e| anyhow!("{e}"))?;
        Ok(spec)
    }

    pub fn variance_mode(&self) -> VarianceMode {
        match self.variance_mode.as_str() {
            "plugin" => VarianceMode::PlugIn,
            _ => VarianceMode::Known { sigma: self.sigma },
        }
    }

    pub fn to_core(&self) -> Result<EnsembleConfig> {
        let config = EnsembleConfig {
            policy: self.policy_spec()?,
            rewards: self.rewards.clone(),
            horizon: self.horizon,
            replications: self.replications,
            base_seed: self.seed,
            checkpoints: self.checkpoints.clone(),
            level: self.level,
            variance_mode: self.variance_mode(),
        };
        config.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(config)
    }
}

impl BatchedExperiment {
    pub fn is_sample_only(&self) -> bool {
        self.policy.starts_with("limit_")
    }

    pub fn batched_kind(&self) -> Result<BatchedKind> {
        let kind = match self.policy.as_str() {
            "etc_batched" | "limit_etc" => BatchedKind::Etc { epsilon: self.epsilon },
            "ucb_batched" | "limit_ucb_batched" => BatchedKind::Ucb { pi_max: self.pi_max },
            "thompson_batched" | "limit_thompson_batched" => BatchedKind::Thompson {
                pi_min: self.pi_min,
                pi_max: self.pi_max,
            },
            other => bail!("unknown policy `{other}` (field `policy`)"),
        };
        kind.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(kind)
    }

    pub fn batched_spec(&self) -> Result<BatchedSpec> {
        let spec = BatchedSpec {
            kind: self.batched_kind()?,
            horizon: self.horizon,
        };
        spec.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(spec)
    }

    pub fn limit_spec(&self) -> Result<LimitSampleSpec> {
        Ok(LimitSampleSpec {
            kind: self.batched_kind()?,
        })
    }

    pub fn reward_pair(&self) -> [RewardModel; 2] {
        [self.rewards[0], self.rewards[1]]
    }
}

impl ConcentrationExperiment {
    pub fn drift_spec(&self) -> Result<banditlab::concentration::DriftProcessSpec> {
        use banditlab::concentration::{DriftFn, DriftProcessSpec, Window};
        let spec = DriftProcessSpec {
            g: DriftFn::InverseSqrt { gamma: self.gamma },
            window: Window {
                alpha: self.alpha,
                beta: self.beta,
                scale: self.scale,
            },
            sigma_x: self.sigma_x,
            c_tilde: self.c_tilde,
        };
        spec.validate().map_err(|e| anyhow!("{e}"))?;
        for &l in &self.lambdas {
            if l.is_nan() || l <= 0.0 {
                bail!("field `lambdas`: thresholds must be > 0, got {l}");
            }
        }
        if self.replications < 1000 {
            bail!("field `replications`: concentration runs need >= 1000, got {}", self.replications);
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(text: &str) -> Result<ExperimentConfig> {
        resolve(toml::from_str::<RawConfig>(text).unwrap())
    }

    #[test]
    fn minimal_config_fills_the_default_protocol() {
        let cfg = parse_str("policy = \"moss\"\narms = 2\n").unwrap();
        let ExperimentConfig::Ensemble(e) = cfg else {
            panic!("expected ensemble")
        };
        assert_eq!(e.horizon, 10_000);
        assert_eq!(e.replications, 5_000);
        assert_eq!(e.level, 0.95);
        assert_eq!(e.bins, 50);
        assert_eq!(e.sigma, 1.0);
        assert_eq!(e.rewards.len(), 2);
        assert_eq!(e.checkpoints, vec![2500]);
    }

    #[test]
    fn oc_ucb_defaults_epsilon() {
        let cfg = parse_str("policy = \"oc_ucb\"\n").unwrap();
        let ExperimentConfig::Ensemble(e) = cfg else {
            panic!()
        };
        assert_eq!(e.epsilon, 0.1);
        let spec = e.policy_spec().unwrap();
        assert!(matches!(
            spec.kind,
            PolicyKind::OcUcb { epsilon } if epsilon == 0.1
        ));
    }

    #[test]
    fn unknown_policy_error_names_the_field() {
        let err = parse_str("policy = \"nonsense\"\n").unwrap_err().to_string();
        assert!(err.contains("policy"), "error should name the field: {err}");
        assert!(err.contains("nonsense"));
    }

    #[test]
    fn out_of_range_parameter_is_rejected() {
        let err = parse_str("policy = \"oc_ucb\"\nepsilon = -1.0\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("epsilon"), "{err}");

        let err = parse_str("policy = \"etc_batched\"\nepsilon = 2.0\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("epsilon"), "{err}");
    }

    #[test]
    fn batched_kind_is_inferred_from_the_policy_name() {
        let cfg = parse_str("policy = \"etc_batched\"\nhorizon = 200\n").unwrap();
        assert!(matches!(cfg, ExperimentConfig::Batched(_)));
        let cfg = parse_str("policy = \"limit_etc\"\n").unwrap();
        let ExperimentConfig::Batched(b) = cfg else {
            panic!()
        };
        assert!(b.is_sample_only());
    }

    #[test]
    fn bernoulli_rewards_switch_the_kl_family() {
        let cfg = parse_str(
            "policy = \"kl_moss\"\n[[reward]]\nfamily = \"bernoulli\"\np = 0.4\n[[reward]]\nfamily = \"bernoulli\"\np = 0.4\n",
        )
        .unwrap();
        let ExperimentConfig::Ensemble(e) = cfg else {
            panic!()
        };
        let spec = e.policy_spec().unwrap();
        assert!(matches!(spec.kl.family, KlFamily::Bernoulli));
        assert_eq!(spec.kl.interval.hi, 1.0);
    }

    #[test]
    fn arms_and_reward_list_must_agree() {
        let err = parse_str(
            "policy = \"moss\"\narms = 3\n[[reward]]\nfamily = \"gaussian\"\nmean = 0.0\nsd = 1.0\n[[reward]]\nfamily = \"gaussian\"\nmean = 0.0\nsd = 1.0\n",
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("arms"), "{err}");
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        assert!(toml::from_str::<RawConfig>("policy = \"moss\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn concentration_defaults() {
        let cfg = parse_str("kind = \"concentration\"\n").unwrap();
        let ExperimentConfig::Concentration(c) = cfg else {
            panic!()
        };
        assert_eq!(c.scale, 1600);
        assert_eq!(c.lambdas.len(), 10);
        assert!(c.drift_spec().is_ok());
    }
}
