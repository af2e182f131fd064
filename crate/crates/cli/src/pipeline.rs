//! Experiment pipelines: execute a resolved config, write CSV reports plus
//! a machine-readable summary, and seal everything with a manifest.
//!
//! Output layout:
//!
//! ```text
//! out/<experiment>/<policy>/histogram.csv     pull-fraction histogram
//!                          /stability.csv     band probabilities per (arm, delta)
//!                          /coverage.csv      Wald coverage per arm
//!                          /witness.csv       witness / tail event estimates
//!                          /summary.json      all reports, machine readable
//!                          /manifest.json     config echo + checksums
//! ```
//!
//! Batched experiments replace the ensemble reports with
//! `pulls_histogram.csv`, `limit_histogram.csv`, and `limit_ks.csv`;
//! concentration experiments write a single `bounds.csv` under
//! `out/<experiment>/`. Progress goes to standard error; data only to
//! files. Existing outputs are only overwritten with `--force`.

use anyhow::{bail, Context, Result};
use banditlab::batched::{
    run_batched_ensemble, sample_limit_ensemble, standardized_error, BatchedResult,
};
use banditlab::concentration::{
    maximal_bound_gaussian, maximal_bound_subgaussian, mc_max_statistics,
    smallest_dominating_threshold,
};
use banditlab::diagnostics::{
    ks_two_sample, run_ensemble, stability_report, wald_coverage, witness_probability,
    CoverageReport, Histogram, KsTest, StabilityReport, WitnessReport,
};
use banditlab::stats::McEstimate;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{
    BatchedExperiment, ConcentrationExperiment, EnsembleExperiment, ExperimentConfig,
};
use crate::manifest::{Manifest, MANIFEST_FILE};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub force: bool,
}

/// Which ensemble reports to emit; `coverage` and `stability` subcommands
/// restrict the set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emit {
    All,
    Coverage,
    Stability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let variance = if n < 2 {
            0.0
        } else {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)
        };
        Moments {
            n: n as u64,
            mean,
            variance,
        }
    }
}

/// Everything an ensemble run produced, as stored in `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub experiment: String,
    pub policy: String,
    pub horizon: u64,
    pub replications: u64,
    pub seed: u64,
    pub stability: StabilityReport,
    pub coverage: Vec<CoverageReport>,
    pub witness: WitnessReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchedEpisodeStats {
    pub mean_p2: f64,
    pub mean_pull_fraction_arm0: f64,
    pub mid_band_mass: f64,
    pub assignment_redraws: u64,
    pub errors: Moments,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchedSummary {
    pub experiment: String,
    pub policy: String,
    pub horizon: u64,
    pub replications: u64,
    pub seed: u64,
    pub limit_draws: u64,
    /// Absent for the sample-only `limit_*` policies.
    pub episodes: Option<BatchedEpisodeStats>,
    pub limit: Moments,
    pub limit_ks: Option<KsTest>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundRow {
    pub lambda: f64,
    pub mc_estimate: f64,
    pub mc_se: f64,
    pub gaussian_bound: f64,
    pub subgaussian_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationSummary {
    pub experiment: String,
    pub scale: u64,
    pub replications: u64,
    pub seed: u64,
    pub rows: Vec<BoundRow>,
    pub smallest_dominating_c: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Summary {
    Ensemble(EnsembleSummary),
    Batched(BatchedSummary),
    Concentration(ConcentrationSummary),
}

pub const SUMMARY_FILE: &str = "summary.json";

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = std::fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            bail!(
                "output directory {} already has contents; pass --force to overwrite",
                dir.display()
            );
        }
    }
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(())
}

fn write_csv<R: Serialize>(dir: &Path, file: &str, rows: &[R]) -> Result<()> {
    let path = dir.join(file);
    let mut writer = csv::Writer::from_path(&path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)?;
    std::fs::write(dir.join(SUMMARY_FILE), json)?;
    Ok(())
}

#[derive(Serialize)]
struct HistogramRow {
    bin: usize,
    lo: f64,
    hi: f64,
    count: u64,
    mass: f64,
}

fn histogram_rows(h: &Histogram) -> Vec<HistogramRow> {
    (0..h.bins())
        .map(|b| {
            let (lo, hi) = h.edges(b);
            HistogramRow {
                bin: b,
                lo,
                hi,
                count: h.counts[b],
                mass: h.mass(b),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct StabilityRowOut {
    arm: usize,
    delta: f64,
    band_probability: f64,
}

#[derive(Serialize)]
struct CoverageRowOut {
    arm: usize,
    level: f64,
    coverage: f64,
    mc_se: f64,
    mean_width: f64,
    used: u64,
    excluded: u64,
}

#[derive(Serialize)]
struct WitnessRowOut {
    quantity: &'static str,
    value: f64,
    mc_se: Option<f64>,
}

/// Executes one ensemble experiment and emits the selected reports.
/// Returns the directory written.
pub fn run_ensemble_experiment(
    exp: &EnsembleExperiment,
    opts: &RunOptions,
    emit: Emit,
) -> Result<PathBuf> {
    let started = Instant::now();
    let dir = opts.out.join(&exp.name).join(&exp.policy);
    prepare_dir(&dir, opts.force)?;
    let config = exp.to_core()?;
    eprintln!(
        "running {} (T = {}, R = {}, seed {})",
        exp.policy, exp.horizon, exp.replications, exp.seed
    );
    let ensemble = run_ensemble(&config)?;

    let stability = stability_report(&ensemble, exp.horizon, &exp.delta_grid, exp.bins)?;
    let mut coverage = Vec::with_capacity(exp.rewards.len());
    for arm in 0..exp.rewards.len() {
        coverage.push(wald_coverage(
            &ensemble,
            arm,
            exp.level,
            exp.rewards[arm].mean(),
            exp.variance_mode(),
        )?);
    }
    let witness = witness_probability(&ensemble)?;

    let mut manifest = Manifest::new(
        ExperimentConfig::Ensemble(exp.clone()),
        started.elapsed().as_millis(),
    );
    if matches!(emit, Emit::All | Emit::Stability) {
        write_csv(&dir, "histogram.csv", &histogram_rows(&stability.histogram))?;
        manifest.record(&dir, "histogram.csv")?;
        let rows: Vec<StabilityRowOut> = stability
            .rows
            .iter()
            .map(|r| StabilityRowOut {
                arm: r.arm,
                delta: r.delta,
                band_probability: r.probability,
            })
            .collect();
        write_csv(&dir, "stability.csv", &rows)?;
        manifest.record(&dir, "stability.csv")?;
    }
    if matches!(emit, Emit::All | Emit::Coverage) {
        let rows: Vec<CoverageRowOut> = coverage
            .iter()
            .map(|c| CoverageRowOut {
                arm: c.arm,
                level: c.level,
                coverage: c.coverage,
                mc_se: c.mc_se,
                mean_width: c.mean_width,
                used: c.used,
                excluded: c.excluded,
            })
            .collect();
        write_csv(&dir, "coverage.csv", &rows)?;
        manifest.record(&dir, "coverage.csv")?;
    }
    if emit == Emit::All {
        let mut rows = vec![WitnessRowOut {
            quantity: "witness_probability",
            value: witness.witness.estimate,
            mc_se: Some(witness.witness.se),
        }];
        if let Some(tail) = &witness.tail {
            rows.push(WitnessRowOut {
                quantity: "tail_event_probability",
                value: tail.estimate,
                mc_se: Some(tail.se),
            });
        }
        rows.push(WitnessRowOut {
            quantity: "tail_checkpoint",
            value: witness.tail_checkpoint as f64,
            mc_se: None,
        });
        write_csv(&dir, "witness.csv", &rows)?;
        manifest.record(&dir, "witness.csv")?;
    }

    let summary = Summary::Ensemble(EnsembleSummary {
        experiment: exp.name.clone(),
        policy: exp.policy.clone(),
        horizon: exp.horizon,
        replications: exp.replications,
        seed: exp.seed,
        stability,
        coverage,
        witness,
    });
    write_summary(&dir, &summary)?;
    manifest.record(&dir, SUMMARY_FILE)?;
    manifest.elapsed_ms = started.elapsed().as_millis();
    manifest.write(&dir)?;
    eprintln!("  wrote {}", dir.display());
    Ok(dir)
}

/// Executes a batched experiment: episodes (unless the policy is a
/// sample-only `limit_*` one), exact limit draws, and their comparison.
pub fn run_batched_experiment(exp: &BatchedExperiment, opts: &RunOptions) -> Result<PathBuf> {
    let started = Instant::now();
    let dir = opts.out.join(&exp.name).join(&exp.policy);
    prepare_dir(&dir, opts.force)?;
    eprintln!(
        "running {} (T = {}, R = {}, {} limit draws, seed {})",
        exp.policy, exp.horizon, exp.replications, exp.limit_draws, exp.seed
    );

    let limit_spec = exp.limit_spec()?;
    let limit_draws = sample_limit_ensemble(&limit_spec, exp.limit_draws, exp.seed)?;
    let limit_hist = Histogram::from_values(limit_draws.iter().copied(), -5.0, 5.0, exp.bins);

    let mut manifest = Manifest::new(
        ExperimentConfig::Batched(exp.clone()),
        started.elapsed().as_millis(),
    );
    write_csv(&dir, "limit_histogram.csv", &histogram_rows(&limit_hist))?;
    manifest.record(&dir, "limit_histogram.csv")?;

    let (episodes, limit_ks) = if exp.is_sample_only() {
        (None, None)
    } else {
        let spec = exp.batched_spec()?;
        let rewards = exp.reward_pair();
        let runs: Vec<BatchedResult> =
            run_batched_ensemble(&spec, &rewards, exp.replications, exp.seed)?;
        let errors: Vec<f64> = runs
            .iter()
            .map(|r| standardized_error(r, rewards[0].mean(), 0))
            .collect::<banditlab::Result<_>>()?;
        let fractions: Vec<f64> = runs
            .iter()
            .map(|r| r.total.pulls[0] as f64 / exp.horizon as f64)
            .collect();
        let pulls_hist = Histogram::from_values(fractions.iter().copied(), 0.0, 1.0, exp.bins);
        write_csv(&dir, "pulls_histogram.csv", &histogram_rows(&pulls_hist))?;
        manifest.record(&dir, "pulls_histogram.csv")?;

        let ks = ks_two_sample(&errors, &limit_draws)?;
        #[derive(Serialize)]
        struct KsRow {
            statistic: f64,
            p_value: f64,
            episodes: u64,
            limit_draws: u64,
        }
        write_csv(
            &dir,
            "limit_ks.csv",
            &[KsRow {
                statistic: ks.statistic,
                p_value: ks.p_value,
                episodes: exp.replications,
                limit_draws: exp.limit_draws,
            }],
        )?;
        manifest.record(&dir, "limit_ks.csv")?;

        let stats = BatchedEpisodeStats {
            mean_p2: runs.iter().map(|r| r.p2).sum::<f64>() / runs.len() as f64,
            mean_pull_fraction_arm0: fractions.iter().sum::<f64>() / fractions.len() as f64,
            mid_band_mass: pulls_hist.mass_overlapping(0.45, 0.55),
            assignment_redraws: runs.iter().map(|r| r.assignment_redraws).sum(),
            errors: Moments::of(&errors),
        };
        (Some(stats), Some(ks))
    };

    let summary = Summary::Batched(BatchedSummary {
        experiment: exp.name.clone(),
        policy: exp.policy.clone(),
        horizon: exp.horizon,
        replications: exp.replications,
        seed: exp.seed,
        limit_draws: exp.limit_draws,
        episodes,
        limit: Moments::of(&limit_draws),
        limit_ks,
    });
    write_summary(&dir, &summary)?;
    manifest.record(&dir, SUMMARY_FILE)?;
    manifest.elapsed_ms = started.elapsed().as_millis();
    manifest.write(&dir)?;
    eprintln!("  wrote {}", dir.display());
    Ok(dir)
}

/// Executes a concentration experiment: the maximal-inequality table over
/// the configured lambda grid.
pub fn run_concentration_experiment(
    exp: &ConcentrationExperiment,
    opts: &RunOptions,
) -> Result<PathBuf> {
    let started = Instant::now();
    let dir = opts.out.join(&exp.name);
    prepare_dir(&dir, opts.force)?;
    eprintln!(
        "running concentration (N = {}, window [{}, {}], R = {}, seed {})",
        exp.scale,
        exp.alpha,
        exp.beta,
        exp.replications,
        exp.seed
    );
    let spec = exp.drift_spec()?;
    let maxima = mc_max_statistics(&spec, exp.replications, exp.seed)?;
    let mut rows = Vec::with_capacity(exp.lambdas.len());
    for &lambda in &exp.lambdas {
        let hits = maxima.iter().filter(|&&m| m >= lambda).count() as u64;
        let est = McEstimate::from_indicator(hits, exp.replications);
        rows.push(BoundRow {
            lambda,
            mc_estimate: est.estimate,
            mc_se: est.se,
            gaussian_bound: maximal_bound_gaussian(&spec, lambda)?,
            subgaussian_bound: maximal_bound_subgaussian(&spec, lambda)?,
        });
    }
    let c_grid: Vec<f64> = (1..=80).map(|i| i as f64 * 0.25).collect();
    let smallest_c =
        smallest_dominating_threshold(exp.gamma, exp.scale, exp.sigma_x, 0.5, &c_grid)?;

    let mut manifest = Manifest::new(
        ExperimentConfig::Concentration(exp.clone()),
        started.elapsed().as_millis(),
    );
    write_csv(&dir, "bounds.csv", &rows)?;
    manifest.record(&dir, "bounds.csv")?;
    let summary = Summary::Concentration(ConcentrationSummary {
        experiment: exp.name.clone(),
        scale: exp.scale,
        replications: exp.replications,
        seed: exp.seed,
        rows,
        smallest_dominating_c: smallest_c,
    });
    write_summary(&dir, &summary)?;
    manifest.record(&dir, SUMMARY_FILE)?;
    manifest.elapsed_ms = started.elapsed().as_millis();
    manifest.write(&dir)?;
    eprintln!("  wrote {}", dir.display());
    Ok(dir)
}

/// Runs whatever the config describes.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf> {
    match config {
        ExperimentConfig::Ensemble(e) => run_ensemble_experiment(e, opts, Emit::All),
        ExperimentConfig::Batched(e) => run_batched_experiment(e, opts),
        ExperimentConfig::Concentration(e) => run_concentration_experiment(e, opts),
    }
}

/// The ten policies of the two-arm reference grid.
pub const REFERENCE_GRID: [&str; 10] = [
    "ucb1",
    "moss",
    "anytime_moss",
    "vanilla_moss",
    "oc_ucb",
    "ada_ucb",
    "kl_moss",
    "kl_ucb_pp",
    "kl_ucb_switch",
    "anytime_kl_ucb_switch",
];

/// Builds the reference-grid experiment for one policy: two identical
/// standard normal arms, T = 10000, R = 5000.
pub fn reference_experiment(policy: &str, seed: u64) -> EnsembleExperiment {
    EnsembleExperiment {
        name: "reproduce-paper".to_string(),
        policy: policy.to_string(),
        rewards: vec![
            banditlab::env::RewardModel::standard_normal(),
            banditlab::env::RewardModel::standard_normal(),
        ],
        horizon: 10_000,
        replications: 5_000,
        seed,
        level: 0.95,
        bins: 50,
        sigma: 1.0,
        variance_mode: "known".to_string(),
        epsilon: 0.1,
        arm: 0,
        kl_interval: [-10.0, 10.0],
        checkpoints: vec![2_500],
        delta_grid: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
    }
}

/// Runs the full reference grid: every policy in [`REFERENCE_GRID`] under
/// the identical-arm protocol, one output directory per policy.
pub fn reproduce_paper(opts: &RunOptions, seed: u64) -> Result<PathBuf> {
    for policy in REFERENCE_GRID {
        let exp = reference_experiment(policy, seed);
        run_ensemble_experiment(&exp, opts, Emit::All)?;
    }
    Ok(opts.out.join("reproduce-paper"))
}

#[derive(Serialize)]
struct ReportRow {
    experiment: String,
    policy: String,
    metric: String,
    value: f64,
}

fn summaries_under(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == SUMMARY_FILE) {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Merges every `summary.json` under `root` into one long-format
/// `summary.csv` (experiment, policy, metric, value).
pub fn merge_report(root: &Path) -> Result<PathBuf> {
    let mut rows: Vec<ReportRow> = Vec::new();
    for path in summaries_under(root)? {
        let text = std::fs::read_to_string(&path)?;
        let summary: Summary = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse {}", path.display()))?;
        let mut push = |experiment: &str, policy: &str, metric: String, value: f64| {
            rows.push(ReportRow {
                experiment: experiment.to_string(),
                policy: policy.to_string(),
                metric,
                value,
            })
        };
        match summary {
            Summary::Ensemble(s) => {
                for c in &s.coverage {
                    push(&s.experiment, &s.policy, format!("coverage[arm={}]", c.arm), c.coverage);
                    push(
                        &s.experiment,
                        &s.policy,
                        format!("mean_width[arm={}]", c.arm),
                        c.mean_width,
                    );
                }
                for row in &s.stability.rows {
                    push(
                        &s.experiment,
                        &s.policy,
                        format!("band[arm={},delta={}]", row.arm, row.delta),
                        row.probability,
                    );
                }
                push(
                    &s.experiment,
                    &s.policy,
                    "mid_band_mass[0.45,0.55]".to_string(),
                    s.stability.histogram.mass_overlapping(0.45, 0.55),
                );
                push(&s.experiment, &s.policy, "witness".to_string(), s.witness.witness.estimate);
                if let Some(tail) = &s.witness.tail {
                    push(&s.experiment, &s.policy, "tail_event".to_string(), tail.estimate);
                }
            }
            Summary::Batched(s) => {
                push(&s.experiment, &s.policy, "limit_mean".to_string(), s.limit.mean);
                push(&s.experiment, &s.policy, "limit_variance".to_string(), s.limit.variance);
                if let Some(e) = &s.episodes {
                    push(&s.experiment, &s.policy, "mean_p2".to_string(), e.mean_p2);
                    push(
                        &s.experiment,
                        &s.policy,
                        "mid_band_mass[0.45,0.55]".to_string(),
                        e.mid_band_mass,
                    );
                    push(&s.experiment, &s.policy, "errors_variance".to_string(), e.errors.variance);
                }
                if let Some(ks) = &s.limit_ks {
                    push(&s.experiment, &s.policy, "limit_ks_statistic".to_string(), ks.statistic);
                    push(&s.experiment, &s.policy, "limit_ks_p".to_string(), ks.p_value);
                }
            }
            Summary::Concentration(s) => {
                for row in &s.rows {
                    push(
                        &s.experiment,
                        "concentration",
                        format!("mc[lambda={}]", row.lambda),
                        row.mc_estimate,
                    );
                    push(
                        &s.experiment,
                        "concentration",
                        format!("gaussian_bound[lambda={}]", row.lambda),
                        row.gaussian_bound,
                    );
                }
                if let Some(c) = s.smallest_dominating_c {
                    push(&s.experiment, "concentration", "smallest_dominating_c".to_string(), c);
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        (&a.experiment, &a.policy, &a.metric).cmp(&(&b.experiment, &b.policy, &b.metric))
    });
    let path = root.join("summary.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    eprintln!("merged {} metrics into {}", rows.len(), path.display());
    Ok(path)
}

/// Re-executes the experiment a manifest describes and verifies that every
/// recorded output hash matches. Returns the paths that were checked.
pub fn verify_manifest(manifest_path: &Path, opts: &RunOptions) -> Result<Vec<String>> {
    let manifest = Manifest::read(manifest_path)?;
    let dir = run_experiment(&manifest.config, opts)?;
    let rerun = Manifest::read(&dir.join(MANIFEST_FILE))?;
    let mut checked = Vec::new();
    for original in &manifest.outputs {
        let Some(now) = rerun.outputs.iter().find(|o| o.file == original.file) else {
            bail!("rerun did not produce {}", original.file);
        };
        if now.sha256 != original.sha256 {
            bail!(
                "output {} differs from the manifest (was {}, now {})",
                original.file,
                original.sha256,
                now.sha256
            );
        }
        checked.push(original.file.clone());
    }
    let mut stderr = std::io::stderr().lock();
    let _ = writeln!(stderr, "verified {} outputs against the manifest", checked.len());
    Ok(checked)
}
