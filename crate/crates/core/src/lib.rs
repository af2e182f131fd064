//! Simulation library for multi-armed bandit experiments built around the
//! optimism principle: which arm a policy pulls, how often, and what that does
//! to downstream inference.
//!
//! The crate is organised as a pipeline:
//!
//! - [`env`] — reward models, deterministic RNG streams, and the episode
//!   engine that drives any policy over a fixed horizon.
//! - [`index_policies`] — closed-form upper-confidence indices (UCB-1, the
//!   MOSS variants, OC-UCB, ADA-UCB) and the argmax selection rule.
//! - [`kl_policies`] — KL divergences, the bisection index solver, and the
//!   KL-flavoured policies (KL-UCB, KL-MOSS, KL-UCB++, the switch variants).
//! - [`batched`] — two-epoch batched designs (explore-then-commit, batched
//!   UCB, batched Thompson) together with exact samplers for their
//!   non-normal limiting distributions.
//! - [`diagnostics`] — replicated ensembles and the derived reports:
//!   pull-fraction stability, Wald-interval coverage, Kolmogorov–Smirnov
//!   normality checks, and the instability-witness probability.
//! - [`concentration`] — numerical verification of the maximal inequality
//!   for drifted sample means, including the exact folded-normal bound for
//!   Gaussian increments.
//!
//! Everything is deterministic given a base seed: replications draw from
//! counter-derived [`env::RngStream`]s, so results are independent of worker
//! count and thread scheduling.

pub mod batched;
pub mod concentration;
pub mod diagnostics;
pub mod env;
mod error;
pub mod index_policies;
pub mod kl_policies;
pub mod stats;

pub use error::{Error, Result};
