mod commands;
mod config;
mod io;
mod manifest;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "roadlayout", version, about = "Parametric top-view road scenes: sampling, rendering, CRF inference, evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Single,
    Temporal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample scenes from the prior into OUT/params.jsonl.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write OUT/renders/NNNNNN.png.
        #[arg(long)]
        render: bool,
    },
    /// Render every scene of a params file to OUT/NNNNNN.png.
    Render {
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write raw class grids (.bev) instead of PNG.
        #[arg(long)]
        raw: bool,
    },
    /// Emit noisy-oracle predictions for every scene of a params file.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Consecutive frames emitted per scene.
        #[arg(long, default_value_t = 1)]
        frames: usize,
    },
    /// MAP inference on a prediction file; writes scenes plus a diagnostics sidecar.
    Infer {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Single)]
        mode: Mode,
        /// Overrides solver.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Accuracy, MSE, rendered IoU and semantic conflicts against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// JSONL of {"unannotated": [names]}; one line applies to every sample.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// JSON report path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Semantic conflicts and temporal changes of labeled sequences.
    Consistency {
        /// One params file per sequence, frames in order.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-run the command recorded in a manifest with its config snapshot.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

impl Command {
    pub fn config_path(&self) -> Option<&PathBuf> {
        match self {
            Command::Generate { config, .. }
            | Command::Render { config, .. }
            | Command::Corrupt { config, .. }
            | Command::Infer { config, .. }
            | Command::Eval { config, .. }
            | Command::Consistency { config, .. } => config.as_ref(),
            Command::Replay { .. } => None,
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("ROADLAYOUT_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().with_context(|| format!("ROADLAYOUT_THREADS={v:?} is not a thread count"))?;
    anyhow::ensure!(n > 0, "ROADLAYOUT_THREADS must be positive");
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> Result<()> {
    init_threads()?;
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match cli.command {
        Command::Replay { manifest } => commands::replay(&manifest),
        command => {
            let config = Config::load(command.config_path().map(PathBuf::as_path))?;
            commands::run(&command, &config, Some(&args))
        }
    }
}
