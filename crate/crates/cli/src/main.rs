//! `csifuse`: simulate multi-station CSI, build datasets, pre-train and train
//! models, and run evaluation sweeps.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "csifuse", version, about = "Multi-station WiFi CSI sensing under station dropout")]
pub struct Cli {
    /// TOML file overriding any part of the default configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads for data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate frame streams and write frames.csv, trajectory.csv and scenario.json.
    Simulate,
    /// Window frames into train/val/test and unlabeled datasets.
    BuildDataset(BuildArgs),
    /// Dump a dataset file as CSV.
    Export(ExportArgs),
    /// Self-supervised pre-training of a feature extractor.
    Pretrain(PretrainArgs),
    /// Supervised downstream training.
    Train(TrainArgs),
    /// Test RMSE of a trained model at several station availabilities.
    Evaluate(EvaluateArgs),
    /// Full grid of methods x availability x label ratio x seeds.
    Sweep(SweepArgs),
    /// Two-component PCA of extractor embeddings.
    PcaExport(PcaArgs),
    /// Recompute summary.csv and heatmap.csv from a metrics.csv.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// frames.csv written by `simulate`; simulates in memory when absent.
    #[arg(long, requires = "metadata")]
    pub frames: Option<PathBuf>,
    /// scenario.json written by `simulate`.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Unlabeled dataset file.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub p_mask: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Frozen,
    Joint,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AugArg {
    None,
    Sma,
    Re,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Offline,
    Online,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub labeled: PathBuf,
    /// Extractor checkpoint, "fresh" (random init) or "identity" (head on raw input).
    #[arg(long, default_value = "fresh")]
    pub extractor: String,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum, default_value = "none")]
    pub aug: AugArg,
    #[arg(long)]
    pub p_mask: Option<f64>,
    /// Erased subcarrier fraction range, "lo,hi".
    #[arg(long, value_parser = commands::parse_pair)]
    pub erase_range: Option<(f64, f64)>,
    #[arg(long, value_enum)]
    pub aug_strategy: Option<StrategyArg>,
    /// Fraction of training labels used (uniform random subset).
    #[arg(long, default_value_t = 1.0)]
    pub label_ratio: f64,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model checkpoint written by `train`.
    #[arg(long, conflicts_with = "constant")]
    pub model: Option<PathBuf>,
    /// Evaluate the constant 0.5 predictor instead of a model.
    #[arg(long)]
    pub constant: bool,
    #[arg(long)]
    pub test: PathBuf,
    /// Available station counts (default: 1..=N_d).
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// "exhaustive", "auto" or "mc:<draws>".
    #[arg(long, default_value = "auto", value_parser = commands::parse_policy)]
    pub policy: csi_fusion::harness::CombinationPolicy,
    /// Pool squared errors over masking patterns instead of averaging RMSEs.
    #[arg(long)]
    pub pooled: bool,
    /// Method name written to metrics.csv.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Methods to run (default: the config's `run` list).
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<csi_fusion::harness::Method>,
    /// Seeds to run (default: the config's sweep seeds).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long)]
    pub extractor: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Availability conditions projected for the test set (default: N_d).
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub metrics: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    commands::run(&cli)
}
