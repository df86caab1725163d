use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod data;
mod output;

use config::{NoiseOrder, Overrides};

/// Noisy long-tailed classification experiments.
#[derive(Parser)]
#[command(name = "poplab", version)]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Sets synth.seed, groups.seed and train.seed before any --set.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides output.dir.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Flip labels before (`pre`) or after (`post`) long-tail subsampling.
    #[arg(long, value_enum, global = true)]
    noise_order: Option<NoiseOrder>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train/eval corpora.
    Synth,
    /// Train one model and write its report.
    Train,
    /// Leave-one-group-out influence sweep.
    Influence,
    /// Closed-form error analysis of the binary Gaussian world.
    Theory,
    /// Paired t-tests over an accuracy-pair fixture.
    Ttest {
        /// Fixture CSV; the bundled one when omitted.
        fixture: Option<PathBuf>,
    },
    /// Per-class and per-group accuracy pairs of two configs.
    Compare { baseline: PathBuf, treated: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()?;
    }
    let overrides = Overrides {
        seed: cli.seed,
        output_dir: cli.output_dir,
        noise_order: cli.noise_order,
        sets: cli.sets,
    };
    let load = |path: Option<&std::path::Path>| -> Result<config::ExperimentConfig> {
        let c = config::load(path, &overrides)?;
        c.check_files()?;
        Ok(c)
    };
    match cli.command {
        Command::Compare { baseline, treated } => {
            if cli.config.is_some() {
                bail!("compare takes its two configs as arguments; drop --config");
            }
            commands::compare(&load(Some(&baseline))?, &load(Some(&treated))?)
        }
        Command::Ttest { fixture } => {
            let mut c = config::load(cli.config.as_deref(), &overrides)?;
            if fixture.is_some() {
                c.ttest.fixture = fixture;
            }
            c.check_files()?;
            commands::ttest(&c)
        }
        Command::Synth => commands::synth(&load(cli.config.as_deref())?),
        Command::Train => commands::train_cmd(&load(cli.config.as_deref())?),
        Command::Influence => commands::influence(&load(cli.config.as_deref())?),
        Command::Theory => commands::theory(&load(cli.config.as_deref())?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
