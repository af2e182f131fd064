use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use banditlab_cli::config::{parse_config, ExperimentConfig, DEFAULT_SEED};
use banditlab_cli::pipeline::{
    merge_report, reproduce_paper, run_batched_experiment, run_concentration_experiment,
    run_ensemble_experiment, run_experiment, Emit, RunOptions,
};

/// Environment variable that overrides the config seed (itself overridden
/// by --seed).
const SEED_ENV: &str = "BANDITLAB_SEED";

#[derive(Parser)]
#[command(
    name = "banditlab",
    version,
    about = "Batch Monte Carlo experiments on optimism-based bandit policies"
)]
struct Cli {
    /// Base seed; overrides BANDITLAB_SEED and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output root directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file (or rerun a manifest).
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the two-arm reference grid: 10 policies, identical N(0,1) arms,
    /// T = 10000, R = 5000.
    ReproducePaper,
    /// Run an ensemble experiment, emitting only the coverage table.
    Coverage {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an ensemble experiment, emitting only the stability reports.
    Stability {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a batched two-epoch design against its limit law.
    Batched {
        #[arg(long)]
        config: PathBuf,
    },
    /// Tabulate maximal-inequality bounds against Monte Carlo estimates.
    Concentration {
        #[arg(long)]
        config: PathBuf,
    },
    /// Merge every summary.json under the output root into summary.csv.
    Report,
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(text) => {
            let seed = text
                .parse::<u64>()
                .with_context(|| format!("{SEED_ENV} must be a u64, got `{text}`"))?;
            Ok(Some(seed))
        }
        Err(_) => Ok(None),
    }
}

fn apply_seed(config: &mut ExperimentConfig, flag: Option<u64>) -> Result<()> {
    if let Some(seed) = flag.or(env_seed()?) {
        config.set_seed(seed);
    }
    Ok(())
}

fn load(path: &std::path::Path, flag_seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = parse_config(path)?;
    apply_seed(&mut config, flag_seed)?;
    Ok(config)
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("cannot size the worker pool")?;
    }
    let opts = RunOptions {
        out: cli.out.clone(),
        force: cli.force,
    };
    match cli.command {
        Command::Run { config } => {
            run_experiment(&load(&config, cli.seed)?, &opts)?;
        }
        Command::ReproducePaper => {
            let seed = cli.seed.or(env_seed()?).unwrap_or(DEFAULT_SEED);
            reproduce_paper(&opts, seed)?;
        }
        Command::Coverage { config } => match load(&config, cli.seed)? {
            ExperimentConfig::Ensemble(e) => {
                run_ensemble_experiment(&e, &opts, Emit::Coverage)?;
            }
            _ => bail!("`coverage` expects an ensemble config"),
        },
        Command::Stability { config } => match load(&config, cli.seed)? {
            ExperimentConfig::Ensemble(e) => {
                run_ensemble_experiment(&e, &opts, Emit::Stability)?;
            }
            _ => bail!("`stability` expects an ensemble config"),
        },
        Command::Batched { config } => match load(&config, cli.seed)? {
            ExperimentConfig::Batched(e) => {
                run_batched_experiment(&e, &opts)?;
            }
            _ => bail!("`batched` expects a batched config"),
        },
        Command::Concentration { config } => match load(&config, cli.seed)? {
            ExperimentConfig::Concentration(e) => {
                run_concentration_experiment(&e, &opts)?;
            }
            _ => bail!("`concentration` expects a concentration config"),
        },
        Command::Report => {
            merge_report(&cli.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
