mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::exit;

/// Single-image super-resolution with a hybrid residual attention network.
#[derive(Debug, Parser)]
#[command(name = "hran", version, about)]
struct Cli {
    /// Maximum number of worker threads (results do not depend on it).
    #[arg(long, global = true, env = "HRAN_THREADS")]
    threads: Option<usize>,

    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

// Parsed once at startup, so the size spread between variants is harmless.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a directory of HR images.
    Train(TrainArgs),
    /// Super-resolve images with a trained checkpoint.
    Infer(InferArgs),
    /// Score SR output against HR references (Y-channel PSNR/SSIM).
    Eval(EvalArgs),
    /// Produce bicubic-downscaled LR images from HR images.
    Degrade(DegradeArgs),
    /// Print the parameter count of a configuration or checkpoint.
    Params(ParamsArgs),
}

/// Model settings shared by `train` and `params`.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Base configuration: `default` or `tiny`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Upscaling factor (2, 3, 4 or 8).
    #[arg(long)]
    pub scale: Option<usize>,
    /// Feature channels.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Number of residual groups.
    #[arg(long)]
    pub rg_count: Option<usize>,
    /// Attention blocks per residual group.
    #[arg(long)]
    pub hrab_per_rg: Option<usize>,
    /// Channel-attention reduction ratio.
    #[arg(long)]
    pub ca_reduction: Option<usize>,
    /// Feature fusion: `bff` (binarized) or `hff` (hierarchical).
    #[arg(long)]
    pub fusion: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of HR training images.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Directory of pre-degraded LR images named `<stem>x<scale>.<ext>`.
    #[arg(long)]
    pub lr_dir: Option<PathBuf>,
    /// File listing HR images, one path per line.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory for `checkpoint.bin` and `loss.log`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from `<out>/checkpoint.bin`.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    /// LR patches per batch.
    #[arg(long)]
    pub batch: Option<usize>,
    /// LR patch side in pixels.
    #[arg(long)]
    pub patch: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Halve the learning rate every this many iterations.
    #[arg(long)]
    pub halve_every: Option<u64>,
    /// Total number of iterations.
    #[arg(long)]
    pub max_iters: Option<u64>,
    /// Seed for initialization and patch sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Iterations between checkpoints.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Iterations between loss log lines.
    #[arg(long)]
    pub log_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input images or directories of images.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Expected scale; must match the checkpoint.
    #[arg(long)]
    pub scale: Option<usize>,
    /// Average the model over the 8 flips/rotations of each input.
    #[arg(long)]
    pub ensemble: bool,
    /// Write PNG instead of PPM.
    #[arg(long)]
    pub png: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["sr", "checkpoint", "bicubic"])))]
pub struct EvalArgs {
    /// HR reference directory.
    #[arg(long)]
    pub hr: PathBuf,
    /// Scale factor; also the border crop in pixels.
    #[arg(long)]
    pub scale: usize,
    /// Directory of SR results to score.
    #[arg(long)]
    pub sr: Option<PathBuf>,
    /// Score a checkpoint by running it on degraded HR images.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Score plain bicubic upscaling.
    #[arg(long)]
    pub bicubic: bool,
    /// Use pre-degraded LR inputs named `<stem>x<scale>.<ext>` instead of
    /// degrading the HR images.
    #[arg(long)]
    pub lr: Option<PathBuf>,
    /// Self-ensemble the checkpoint.
    #[arg(long, requires = "checkpoint")]
    pub ensemble: bool,
    /// Write the TSV report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a JSON report.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// HR image directory.
    #[arg(long)]
    pub hr: PathBuf,
    #[arg(long)]
    pub scale: usize,
    /// Output directory; files are named `<stem>x<scale>.ppm`.
    #[arg(long)]
    pub out: PathBuf,
    /// Write PNG instead of PPM.
    #[arg(long)]
    pub png: bool,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// Config file (same format as for `train`).
    #[arg(long, conflicts_with = "checkpoint")]
    pub config: Option<PathBuf>,
    /// Read the model configuration from a checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        log::LevelFilter::Warn
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(exit::CONFIG);
        }
        hran_core::exec::init_global_threads(n);
    }
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Infer(a) => commands::infer(a),
        Command::Eval(a) => commands::eval(a),
        Command::Degrade(a) => commands::degrade(a),
        Command::Params(a) => commands::params(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
