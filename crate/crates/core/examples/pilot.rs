//! Scratch pilot runs used to calibrate test thresholds.

use banditlab::batched::{
    run_batched_ensemble, sample_limit_ensemble, standardized_error, BatchedKind, BatchedSpec,
    LimitSampleSpec,
};
use banditlab::diagnostics::{
    ks_normality, ks_two_sample, run_ensemble, stability_report, wald_coverage,
    witness_probability, EnsembleConfig, VarianceMode,
};
use banditlab::env::RewardModel;
use banditlab::index_policies::{KlSettings, PolicyKind, PolicySpec};
use std::time::Instant;

fn config(kind: PolicyKind, horizon: u64, replications: u64, seed: u64) -> EnsembleConfig {
    EnsembleConfig {
        policy: PolicySpec::with_kl(kind, KlSettings::default()),
        rewards: vec![RewardModel::standard_normal(), RewardModel::standard_normal()],
        horizon,
        replications,
        base_seed: seed,
        checkpoints: vec![horizon / 4],
        level: 0.95,
        variance_mode: VarianceMode::Known { sigma: 1.0 },
    }
}

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(42);
    let t0 = Instant::now();

    println!("== grid T=1e4 R=5000 seed {seed} ==");
    let kinds = [
        PolicyKind::RoundRobin,
        PolicyKind::Ucb1,
        PolicyKind::Moss,
        PolicyKind::AnytimeMoss,
        PolicyKind::VanillaMoss,
        PolicyKind::OcUcb { epsilon: 0.1 },
        PolicyKind::AdaUcb,
        PolicyKind::KlMoss,
        PolicyKind::KlUcbPp,
        PolicyKind::KlUcbSwitch,
        PolicyKind::AnytimeKlUcbSwitch,
    ];
    for kind in kinds {
        let t = Instant::now();
        let cfg = config(kind, 10_000, 5000, seed);
        let ens = run_ensemble(&cfg).unwrap();
        let stab = stability_report(&ens, 10_000, &[0.1], 50).unwrap();
        let cov = wald_coverage(&ens, 0, 0.95, 0.0, VarianceMode::Known { sigma: 1.0 }).unwrap();
        let wit = witness_probability(&ens).unwrap();
        let band = stab.rows[0].probability;
        let mid = stab.histogram.mass_overlapping(0.45, 0.55);
        println!(
            "{:“<24} band@0.1 {:.4}  cov {:.4}  witness {:.4}  tail {:.4}  mid-mass {:.4}  [{:.1}s]",
            format!("{:?}", kind),
            band,
            cov.coverage,
            wit.witness.estimate,
            wit.tail.map(|t| t.estimate).unwrap_or(f64::NAN),
            mid,
            t.elapsed().as_secs_f64()
        );
    }

    println!("== witness across T (MOSS vs UCB1) ==");
    for kind in [PolicyKind::Moss, PolicyKind::Ucb1] {
        for horizon in [1000u64, 10_000, 100_000] {
            let t = Instant::now();
            let cfg = config(kind, horizon, 5000, seed);
            let ens = run_ensemble(&cfg).unwrap();
            let wit = witness_probability(&ens).unwrap();
            println!(
                "{:?} T={horizon}: witness {:.4} (se {:.4})  [{:.1}s]",
                kind,
                wit.witness.estimate,
                wit.witness.se,
                t.elapsed().as_secs_f64()
            );
        }
    }

    println!("== batched ETC limit law ==");
    let t = Instant::now();
    let spec = BatchedSpec {
        kind: BatchedKind::Etc { epsilon: 0.1 },
        horizon: 20_000,
    };
    let rewards = [RewardModel::standard_normal(), RewardModel::standard_normal()];
    let runs = run_batched_ensemble(&spec, &rewards, 5000, seed).unwrap();
    let errors: Vec<f64> = runs
        .iter()
        .map(|r| standardized_error(r, 0.0, 0).unwrap())
        .collect();
    let limit = LimitSampleSpec {
        kind: BatchedKind::Etc { epsilon: 0.1 },
    };
    let draws = sample_limit_ensemble(&limit, 1_000_000, seed).unwrap();
    let ks = ks_two_sample(&errors, &draws).unwrap();
    println!(
        "ETC eps 0.1: KS {:.4} p {:.4}  [{:.1}s]",
        ks.statistic,
        ks.p_value,
        t.elapsed().as_secs_f64()
    );

    let unit = LimitSampleSpec {
        kind: BatchedKind::Etc { epsilon: 1.0 },
    };
    let draws = sample_limit_ensemble(&unit, 1_000_000, seed + 1).unwrap();
    let ks = ks_normality(&draws).unwrap();
    println!("ETC eps 1.0 vs N(0,1): KS {:.5}", ks.statistic);

    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
