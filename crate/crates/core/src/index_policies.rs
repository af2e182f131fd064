//! Closed-form optimism indices and the argmax selection rule.
//!
//! Every policy here scores arms with an upper-confidence index
//! `U_a(t) = μ̂_a + bonus(n_a, t, T, K)` and pulls the argmax. The bonus
//! shapes are what distinguish the family:
//!
//! ```text
//! UCB-1         sqrt(2 ln T / n)
//! MOSS          sqrt(max{0, ln((T/K)/n)} / n)
//! Anytime-MOSS  sqrt(max{0, ln(t/(K n))} / n)
//! Vanilla-MOSS  sqrt(ln(T/n) / n)
//! OC-UCB        sqrt(2 (1+ε) ln(T/t) / n)
//! ADA-UCB       sqrt(2 max{0, ln(T/H_a)} / n),  H_a = Σ_j min(n_j, sqrt(n_a n_j))
//! ```
//!
//! KL-flavoured kinds delegate to [`crate::kl_policies`]. Ties always break
//! toward the smallest arm index so that episodes stay reproducible.

use serde::{Deserialize, Serialize};

use crate::env::ArmState;
use crate::kl_policies::{self, KlFamily, MeanInterval};
use crate::{Error, Result};

/// `max{0, ln x}`, the truncated logarithm used by MOSS-style bonuses.
pub fn log_plus(x: f64) -> f64 {
    x.ln().max(0.0)
}

/// Tagged description of a bandit policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum PolicyKind {
    Ucb1,
    Moss,
    AnytimeMoss,
    VanillaMoss,
    OcUcb { epsilon: f64 },
    AdaUcb,
    KlUcb,
    KlMoss,
    KlUcbPp,
    KlUcbSwitch,
    AnytimeKlUcbSwitch,
    RoundRobin,
    AlwaysArm { arm: usize },
}

impl PolicyKind {
    /// Snake_case name, as addressed from experiment configs.
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Ucb1 => "ucb1",
            PolicyKind::Moss => "moss",
            PolicyKind::AnytimeMoss => "anytime_moss",
            PolicyKind::VanillaMoss => "vanilla_moss",
            PolicyKind::OcUcb { .. } => "oc_ucb",
            PolicyKind::AdaUcb => "ada_ucb",
            PolicyKind::KlUcb => "kl_ucb",
            PolicyKind::KlMoss => "kl_moss",
            PolicyKind::KlUcbPp => "kl_ucb_pp",
            PolicyKind::KlUcbSwitch => "kl_ucb_switch",
            PolicyKind::AnytimeKlUcbSwitch => "anytime_kl_ucb_switch",
            PolicyKind::RoundRobin => "round_robin",
            PolicyKind::AlwaysArm { .. } => "always_arm",
        }
    }

    pub fn is_kl(&self) -> bool {
        matches!(
            self,
            PolicyKind::KlUcb
                | PolicyKind::KlMoss
                | PolicyKind::KlUcbPp
                | PolicyKind::KlUcbSwitch
                | PolicyKind::AnytimeKlUcbSwitch
        )
    }

    pub fn is_schedule(&self) -> bool {
        matches!(self, PolicyKind::RoundRobin | PolicyKind::AlwaysArm { .. })
    }
}

/// Settings for the KL-index solver; ignored by non-KL kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlSettings {
    pub family: KlFamily,
    pub interval: MeanInterval,
}

impl Default for KlSettings {
    fn default() -> Self {
        KlSettings {
            family: KlFamily::Gaussian { sigma: 1.0 },
            interval: MeanInterval { lo: -10.0, hi: 10.0 },
        }
    }
}

impl KlSettings {
    pub fn bernoulli() -> Self {
        KlSettings {
            family: KlFamily::Bernoulli,
            interval: MeanInterval { lo: 0.0, hi: 1.0 },
        }
    }
}

/// A policy plus its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub kl: KlSettings,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            kind,
            kl: KlSettings::default(),
        }
    }

    pub fn with_kl(kind: PolicyKind, kl: KlSettings) -> Self {
        PolicySpec { kind, kl }
    }

    /// Whether the index reads the horizon `T`.
    pub fn horizon_aware(&self) -> bool {
        matches!(
            self.kind,
            PolicyKind::Ucb1
                | PolicyKind::Moss
                | PolicyKind::VanillaMoss
                | PolicyKind::OcUcb { .. }
                | PolicyKind::AdaUcb
                | PolicyKind::KlMoss
                | PolicyKind::KlUcbPp
                | PolicyKind::KlUcbSwitch
        )
    }

    pub fn validate(&self, arms: usize) -> Result<()> {
        match self.kind {
            PolicyKind::OcUcb { epsilon } => {
                if !epsilon.is_finite() || epsilon <= 0.0 {
                    return Err(Error::config(
                        "epsilon",
                        format!("oc_ucb requires epsilon > 0, got {epsilon}"),
                    ));
                }
            }
            PolicyKind::AlwaysArm { arm } if arm >= arms => {
                return Err(Error::config(
                    "arm",
                    format!("always_arm arm {arm} out of range for {arms} arms"),
                ));
            }
            _ => {}
        }
        if self.kind.is_kl() {
            self.kl.interval.validate()?;
            self.kl.family.validate()?;
        }
        Ok(())
    }
}

/// Everything an index needs besides the arm's own state.
///
/// `t` is the number of completed rounds; selection for round `t + 1`
/// evaluates indices at this context, so `t ≥ K` and every arm has at
/// least one pull.
#[derive(Debug, Clone, Copy)]
pub struct IndexContext<'a> {
    pub t: u64,
    pub horizon: u64,
    pub states: &'a [ArmState],
}

impl IndexContext<'_> {
    pub fn arms(&self) -> usize {
        self.states.len()
    }
}

/// UCB-1: `μ̂ + sqrt(2 ln T / n)`.
pub fn ucb1_index(state: &ArmState, ctx: &IndexContext) -> f64 {
    debug_assert!(state.pulls() >= 1);
    let n = state.pulls() as f64;
    state.mean() + (2.0 * (ctx.horizon as f64).ln() / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MossVariant {
    /// Horizon-aware: `ln((T/K)/n)` truncated at zero.
    Horizon,
    /// Horizon replaced by the current round: `ln(t/(K n))` truncated at zero.
    Anytime,
    /// No arm-count scaling and no truncation: `ln(T/n)`.
    Vanilla,
}

/// MOSS-family index for one arm.
pub fn moss_index(state: &ArmState, ctx: &IndexContext, variant: MossVariant) -> f64 {
    debug_assert!(state.pulls() >= 1);
    let n = state.pulls() as f64;
    let k = ctx.arms() as f64;
    let horizon = ctx.horizon as f64;
    let log_term = match variant {
        MossVariant::Horizon => log_plus(horizon / (k * n)),
        MossVariant::Anytime => log_plus(ctx.t as f64 / (k * n)),
        MossVariant::Vanilla => {
            debug_assert!(n <= horizon, "vanilla MOSS requires n <= T");
            (horizon / n).ln()
        }
    };
    state.mean() + (log_term / n).sqrt()
}

/// OC-UCB: `μ̂ + sqrt(2 (1+ε) ln(T/t) / n)`.
pub fn oc_ucb_index(state: &ArmState, ctx: &IndexContext, epsilon: f64) -> f64 {
    debug_assert!(state.pulls() >= 1);
    debug_assert!(ctx.t <= ctx.horizon, "oc_ucb requires t <= T");
    let n = state.pulls() as f64;
    let ratio = ctx.horizon as f64 / ctx.t as f64;
    state.mean() + (2.0 * (1.0 + epsilon) / n * ratio.ln()).sqrt()
}

/// ADA-UCB: `μ̂ + sqrt(2 max{0, ln(T/H_a)} / n)` with
/// `H_a = Σ_j min(n_j, sqrt(n_a n_j))`.
pub fn ada_ucb_index(arm: usize, ctx: &IndexContext) -> f64 {
    let n_a = ctx.states[arm].pulls() as f64;
    debug_assert!(n_a >= 1.0);
    let h: f64 = ctx
        .states
        .iter()
        .map(|s| {
            let n_j = s.pulls() as f64;
            n_j.min((n_a * n_j).sqrt())
        })
        .sum();
    ctx.states[arm].mean() + (2.0 / n_a * log_plus(ctx.horizon as f64 / h)).sqrt()
}

/// The optimism index of `policy` for one arm.
///
/// Schedule policies (round-robin, always-arm) have no index and error out.
pub fn policy_index(policy: &PolicySpec, arm: usize, ctx: &IndexContext) -> Result<f64> {
    let state = &ctx.states[arm];
    let value = match policy.kind {
        PolicyKind::Ucb1 => ucb1_index(state, ctx),
        PolicyKind::Moss => moss_index(state, ctx, MossVariant::Horizon),
        PolicyKind::AnytimeMoss => moss_index(state, ctx, MossVariant::Anytime),
        PolicyKind::VanillaMoss => moss_index(state, ctx, MossVariant::Vanilla),
        PolicyKind::OcUcb { epsilon } => oc_ucb_index(state, ctx, epsilon),
        PolicyKind::AdaUcb => ada_ucb_index(arm, ctx),
        PolicyKind::KlUcb
        | PolicyKind::KlMoss
        | PolicyKind::KlUcbPp
        | PolicyKind::KlUcbSwitch
        | PolicyKind::AnytimeKlUcbSwitch => kl_policies::kl_policy_index(policy, arm, ctx)?,
        PolicyKind::RoundRobin | PolicyKind::AlwaysArm { .. } => {
            return Err(Error::NotAnIndexPolicy {
                name: policy.kind.name(),
            })
        }
    };
    Ok(value)
}

/// Argmax of the policy's indices; ties break toward the smallest arm.
///
/// A NaN index is surfaced as an error, never ignored.
pub fn select_arm(policy: &PolicySpec, ctx: &IndexContext) -> Result<usize> {
    match policy.kind {
        PolicyKind::RoundRobin => return Ok((ctx.t % ctx.arms() as u64) as usize),
        PolicyKind::AlwaysArm { arm } => return Ok(arm),
        _ => {}
    }
    let mut best_arm = 0usize;
    let mut best = f64::NEG_INFINITY;
    for arm in 0..ctx.arms() {
        let value = policy_index(policy, arm, ctx)?;
        if value.is_nan() {
            return Err(Error::NanIndex { arm, round: ctx.t });
        }
        if value > best {
            best = value;
            best_arm = arm;
        }
    }
    Ok(best_arm)
}
