//! `lep`: collect demonstrations, train learned exploration processes, run
//! DDPG experiments and curricula, and draw the resulting curves.

mod artifacts;
mod commands;
mod config;
mod error;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::Config;
use crate::error::CliError;
use crate::plot::PlotSpec;

#[derive(Debug, Parser)]
#[command(name = "lep", version, about = "Learned exploration processes for DDPG")]
struct Cli {
    /// TOML configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single training seed, also used for collection and LEP training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Check the command's existing outputs against the config hash instead of running it.
    #[arg(long, global = true)]
    verify: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roll out scripted experts and write a trajectory dataset.
    Collect {
        #[arg(long)]
        task: String,
        /// Number of trajectories.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an LEP on a dataset.
    TrainLep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train DDPG on every configured instance and seed.
    Train {
        #[arg(long)]
        task: String,
        /// gaussian, ou or lep:<model path>
        #[arg(long)]
        exploration: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run curriculum rounds from scripted experts onwards.
    Curriculum {
        #[arg(long)]
        rounds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw aggregate or histogram CSVs as SVG.
    Plot {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long = "label")]
        labels: Vec<String>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value = "")]
        title: String,
        /// Inputs are histogram CSVs.
        #[arg(long)]
        histogram: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Action-direction concentration on the point mass.
    ToyFig1 {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn output(&self, ctx: &Ctx) -> PathBuf {
        match self {
            Self::Collect { out, .. } | Self::TrainLep { out, .. } | Self::Plot { out, .. } => out.clone(),
            Self::Train { out, task, .. } => out.clone().unwrap_or_else(|| commands::default_out(ctx, &format!("train-{task}"))),
            Self::Curriculum { out, .. } => out.clone().unwrap_or_else(|| commands::default_out(ctx, "curriculum")),
            Self::ToyFig1 { out } => out.clone().unwrap_or_else(|| commands::default_out(ctx, "toy-fig1")),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        config.plan.workers = Some(w);
    }
    let hash = config.hash();
    let ctx = Ctx {
        config,
        hash,
        force: cli.force,
    };
    log::debug!("config hash {}", ctx.hash);
    if cli.verify {
        let path = cli.command.output(&ctx);
        let n = artifacts::verify(&path, &ctx.hash)?;
        println!("verified {n} files under {} against config hash {}", path.display(), ctx.hash);
        return Ok(());
    }
    let out = cli.command.output(&ctx);
    match cli.command {
        Command::Collect { task, n, .. } => commands::collect(&ctx, &task, n, &out),
        Command::TrainLep { dataset, .. } => commands::train_lep_cmd(&ctx, &dataset, &out),
        Command::Train { task, exploration, .. } => {
            let failed = commands::train(&ctx, &task, &exploration, &out)?;
            if failed > 0 {
                return Err(CliError::Runtime(format!(
                    "{failed} runs failed; see {}",
                    out.join("manifest.json").display()
                )));
            }
            Ok(())
        }
        Command::Curriculum { rounds, .. } => commands::curriculum(&ctx, rounds, &out),
        Command::Plot {
            inputs,
            labels,
            threshold,
            title,
            histogram,
            ..
        } => commands::plot(
            &ctx,
            &PlotSpec {
                inputs,
                labels,
                threshold,
                title,
                output: out,
            },
            histogram,
        ),
        Command::ToyFig1 { .. } => {
            let (single, history) = commands::toy_fig1(&ctx, &out)?;
            println!("single-state circular variance {single:.4}");
            println!("history-conditioned circular variance {history:.4}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LEP_EXPLORE_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
