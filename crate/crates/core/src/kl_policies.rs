//! KL divergences, the bisection index solver, and the KL-flavoured
//! policies.
//!
//! A KL index is the largest mean that the data cannot yet rule out:
//!
//! ```text
//! U_a(t) = sup { q ∈ I : KL(μ̂_a, q) ≤ budget }
//! ```
//!
//! where the budget depends on the policy:
//!
//! ```text
//! KL-UCB                  (ln t + max{0, ln ln t}) / n
//! KL-MOSS                 ln⁺(T/n) / n
//! KL-UCB++                h(n)/n,  h(n) = ln⁺( (T/K)/n · (ln⁺((T/K)/n))² + 1 )
//! Anytime-switch          φ(t/(K n)) / n,  φ(x) = ln⁺(x) (1 + (ln⁺ x)²)
//! ```
//!
//! The switch policies use the KL index while an arm is data-poor
//! (`n ≤ ⌊(T/K)^{1/5}⌋`, or `⌊(t/K)^{1/5}⌋` for the anytime variant) and a
//! MOSS-shaped closed form afterwards.
//!
//! `q ↦ KL(μ̂, q)` is nondecreasing on `[μ̂, I_hi]`, so the supremum is found
//! by bisection: absolute tolerance 1e-9 in `q`, at most 200 iterations, and
//! the lower bracket is returned so the constraint is never overshot.

use serde::{Deserialize, Serialize};

use crate::index_policies::{
    log_plus, moss_index, IndexContext, MossVariant, PolicyKind, PolicySpec,
};
use crate::{Error, Result};

/// Distribution family the KL divergence is computed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KlFamily {
    Bernoulli,
    /// Fixed, known standard deviation.
    Gaussian { sigma: f64 },
}

impl KlFamily {
    pub fn validate(&self) -> Result<()> {
        if let KlFamily::Gaussian { sigma } = self {
            if !sigma.is_finite() || *sigma <= 0.0 {
                return Err(Error::config("sigma", format!("must be > 0, got {sigma}")));
            }
        }
        Ok(())
    }
}

/// The compact set `I` of candidate means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanInterval {
    pub lo: f64,
    pub hi: f64,
}

impl MeanInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let interval = MeanInterval { lo, hi };
        interval.validate()?;
        Ok(interval)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() || self.lo >= self.hi {
            return Err(Error::config(
                "kl_interval",
                format!("need finite lo < hi, got [{}, {}]", self.lo, self.hi),
            ));
        }
        Ok(())
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// Right-hand side of the index constraint, `f(·)/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlBudget(f64);

impl KlBudget {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::config(
                "budget",
                format!("must be finite and >= 0, got {value}"),
            ));
        }
        Ok(KlBudget(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// KL divergence between two members of `family`, parameterized by mean.
///
/// Bernoulli boundary cases follow the limits of the formula:
/// `KL(0, q) = -ln(1-q)`, `KL(1, q) = -ln q`, and a target mean of exactly
/// 0 or 1 has infinite divergence from any other mean.
pub fn kl_div(family: &KlFamily, mu1: f64, mu2: f64) -> f64 {
    match *family {
        KlFamily::Bernoulli => {
            let (p, q) = (mu1, mu2);
            if p == q {
                return 0.0;
            }
            if q <= 0.0 || q >= 1.0 {
                return f64::INFINITY;
            }
            let mut kl = 0.0;
            if p > 0.0 {
                kl += p * (p / q).ln();
            }
            if p < 1.0 {
                kl += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
            }
            kl
        }
        KlFamily::Gaussian { sigma } => {
            let d = mu1 - mu2;
            d * d / (2.0 * sigma * sigma)
        }
    }
}

/// Largest `q ∈ [μ̂, I_hi]` with `KL(μ̂, q) ≤ budget`, by bisection.
///
/// `mu_hat` is clamped into `I` first; returns `I_hi` when even the right
/// endpoint satisfies the constraint.
pub fn kl_index(mu_hat: f64, budget: KlBudget, family: &KlFamily, interval: &MeanInterval) -> f64 {
    let anchor = interval.clamp(mu_hat);
    let b = budget.value();
    if b == 0.0 {
        // Only q = μ̂ satisfies KL = 0; skip the search so roundoff in the
        // divergence cannot nudge the answer upward.
        return anchor;
    }
    if kl_div(family, anchor, interval.hi) <= b {
        return interval.hi;
    }
    let mut lo = anchor;
    let mut hi = interval.hi;
    for _ in 0..200 {
        if hi - lo <= 1e-9 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if kl_div(family, anchor, mid) <= b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `⌊(num/den)^{1/5}⌋` in exact integer arithmetic.
pub fn fifth_root_floor(num: u64, den: u64) -> u64 {
    assert!(den > 0);
    let mut m: u64 = 0;
    while (u128::from(m) + 1).pow(5) * u128::from(den) <= u128::from(num) {
        m += 1;
    }
    m
}

/// `φ(x) = ln⁺(x) (1 + (ln⁺ x)²)`, the anytime-switch exploration rate.
pub fn phi(x: f64) -> f64 {
    let lp = log_plus(x);
    lp * (1.0 + lp * lp)
}

fn kl_ucb_pp_h(x: f64) -> f64 {
    let lp = log_plus(x);
    // The argument is always >= 1, so the outer truncation is inactive.
    log_plus(x * lp * lp + 1.0)
}

/// Exploration budget `f(·)/n` for the KL policy kinds.
pub fn budget_for(kind: &PolicyKind, n: u64, t: u64, horizon: u64, arms: usize) -> Result<KlBudget> {
    if n == 0 {
        return Err(Error::ZeroPulls { arm: usize::MAX });
    }
    let nf = n as f64;
    let value = match kind {
        PolicyKind::KlUcb => {
            debug_assert!(t >= 1);
            let tf = t as f64;
            // ln ln t is undefined below e; floor the term at zero.
            (tf.ln() + tf.ln().ln().max(0.0)) / nf
        }
        PolicyKind::KlMoss | PolicyKind::KlUcbSwitch => log_plus(horizon as f64 / nf) / nf,
        PolicyKind::KlUcbPp => kl_ucb_pp_h((horizon as f64 / arms as f64) / nf) / nf,
        PolicyKind::AnytimeKlUcbSwitch => phi(t as f64 / (arms as f64 * nf)) / nf,
        other => {
            return Err(Error::config(
                "policy",
                format!("`{}` has no KL budget", other.name()),
            ))
        }
    };
    KlBudget::new(value)
}

/// Switch index: the KL branch while the arm is data-poor, a MOSS-shaped
/// closed form afterwards. The boundary `n = ⌊(·/K)^{1/5}⌋` belongs to the
/// KL branch.
pub fn switch_index(
    arm: usize,
    ctx: &IndexContext,
    anytime: bool,
    family: &KlFamily,
    interval: &MeanInterval,
) -> Result<f64> {
    let state = &ctx.states[arm];
    let n = state.pulls();
    let k = ctx.arms() as u64;
    if anytime {
        let threshold = fifth_root_floor(ctx.t, k);
        let x = ctx.t as f64 / (k as f64 * n as f64);
        if n <= threshold {
            let budget = KlBudget::new(phi(x) / n as f64)?;
            Ok(kl_index(state.mean(), budget, family, interval))
        } else {
            Ok(state.mean() + (phi(x) / (2.0 * n as f64)).sqrt())
        }
    } else {
        let threshold = fifth_root_floor(ctx.horizon, k);
        if n <= threshold {
            let budget = budget_for(&PolicyKind::KlMoss, n, ctx.t, ctx.horizon, ctx.arms())?;
            Ok(kl_index(state.mean(), budget, family, interval))
        } else {
            Ok(moss_index(state, ctx, MossVariant::Horizon))
        }
    }
}

/// Dispatches one arm's index for the KL policy kinds.
pub(crate) fn kl_policy_index(policy: &PolicySpec, arm: usize, ctx: &IndexContext) -> Result<f64> {
    let state = &ctx.states[arm];
    let family = &policy.kl.family;
    let interval = &policy.kl.interval;
    match policy.kind {
        PolicyKind::KlUcb | PolicyKind::KlMoss | PolicyKind::KlUcbPp => {
            let budget = budget_for(&policy.kind, state.pulls(), ctx.t, ctx.horizon, ctx.arms())?;
            Ok(kl_index(state.mean(), budget, family, interval))
        }
        PolicyKind::KlUcbSwitch => switch_index(arm, ctx, false, family, interval),
        PolicyKind::AnytimeKlUcbSwitch => switch_index(arm, ctx, true, family, interval),
        other => Err(Error::config(
            "policy",
            format!("`{}` is not a KL policy", other.name()),
        )),
    }
}

/// Checks `KL(p, q) ≥ c (p - q)²` on a `samples × samples` interior grid of
/// `(0, 1)²`. The classical Pinsker constant `c = 2` holds for Bernoulli.
pub fn pinsker_check(family: &KlFamily, samples: usize, c: f64) -> bool {
    let denom = samples as f64 + 1.0;
    for i in 1..=samples {
        let p = i as f64 / denom;
        for j in 1..=samples {
            let q = j as f64 / denom;
            let gap = p - q;
            if kl_div(family, p, q) < c * gap * gap - 1e-12 {
                return false;
            }
        }
    }
    true
}
