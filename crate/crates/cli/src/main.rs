//! `dex`: command-line access to every dex-core operation.
//!
//! Exit codes: 0 on success, 2 when an input fails validation (one line on
//! stderr, `error: <kind>: <message>`), 64 for usage errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use dex::config::Config;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "dex",
    about = "Pose/expression conditioning toolkit",
    disable_version_flag = true
)]
pub struct Cli {
    /// JSON config file; unset fields keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random draw. Falls back to DEX_SEED, then the config.
    #[arg(long, global = true, env = "DEX_SEED")]
    pub seed: Option<u64>,

    /// Print the version and the hash of the effective config.
    #[arg(long, short = 'V')]
    pub version: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ray map of a pose as a [3, H, W] tensor.
    Raymap(RaymapArgs),
    /// Compose, invert or relate poses.
    ComposePose(ComposePoseArgs),
    /// Warp a [C, D, H, W] feature volume under a pose.
    Warp(WarpArgs),
    /// Tokens [h², c] to volume [2c/h, h/2, h, h], or back with --inverse.
    Reshape(ReshapeArgs),
    /// Adaptive instance normalization of a [C, ...] tensor.
    Adain(AdainArgs),
    /// Print the progressive guidance weight table.
    Schedule(ScheduleArgs),
    /// Sample a toy-lab reenactment with the exact oracle denoiser.
    Sample(SampleArgs),
    /// Expression/pose augmentations of an image.
    Augment(AugmentArgs),
    /// Image and landmark metrics.
    Metrics(MetricsArgs),
    /// Synthetic face lab.
    Toylab(ToylabArgs),
}

#[derive(Debug, Args)]
pub struct RaymapArgs {
    #[arg(long)]
    pub pose: PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    /// `w0` or `w1`; defaults to the config.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an RGB visualization.
    #[arg(long, value_name = "PNG")]
    pub png: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoseOp {
    /// a ∘ b
    Compose,
    /// a⁻¹
    Invert,
    /// b ∘ a⁻¹ (a source, b driving)
    Relative,
}

#[derive(Debug, Args)]
pub struct ComposePoseArgs {
    pub a: PathBuf,
    pub b: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "compose")]
    pub op: PoseOp,
    /// Write the pose here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[arg(long)]
    pub volume: PathBuf,
    /// Relative pose file.
    #[arg(long, conflicts_with_all = ["source", "driving"])]
    pub pose: Option<PathBuf>,
    #[arg(long, requires = "driving")]
    pub source: Option<PathBuf>,
    #[arg(long, requires = "source")]
    pub driving: Option<PathBuf>,
    /// `constant:<value>` or `border`; defaults to the config.
    #[arg(long)]
    pub fill: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReshapeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Token grid side h.
    #[arg(long)]
    pub side: usize,
    #[arg(long)]
    pub inverse: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AdainArgs {
    #[arg(long)]
    pub content: PathBuf,
    /// JSON `{"gamma": [...], "beta": [...]}`.
    #[arg(long)]
    pub style: PathBuf,
    #[arg(long, default_value_t = dex::conditioning::DEFAULT_ADAIN_EPS)]
    pub eps: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Toy-lab item index of the source face.
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    /// Item whose pose drives the sample.
    #[arg(long)]
    pub pose_drive: usize,
    /// Item whose expression drives the sample; omit for pose-only.
    #[arg(long)]
    pub exp_drive: Option<usize>,
    /// `progressive` or `cfg`; defaults to the config.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the raw final latent.
    #[arg(long, value_name = "DXT")]
    pub latent: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AugmentOp {
    /// Cover eye and mouth boxes.
    Mask,
    /// Square crop around the face box.
    Crop,
    /// Rotation about the image center; random unless --degrees is given.
    Rotate,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(value_enum)]
    pub op: AugmentOp,
    /// PNG, or a `.dxt` [C, H, W] tensor.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub pad: f64,
    #[arg(long, default_value_t = dex::augment::DEFAULT_COVER)]
    pub cover: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub degrees: Option<f64>,
    /// PNG, or `.dxt` for the exact values.
    #[arg(long)]
    pub out: PathBuf,
    /// Landmarks moved along with the image (crop, rotate).
    #[arg(long)]
    pub landmarks_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub landmarks_pred: Option<PathBuf>,
    #[arg(long)]
    pub landmarks_drive: Option<PathBuf>,
    #[arg(long)]
    pub landmarks_exp: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ToylabArgs {
    #[command(subcommand)]
    pub command: ToylabCommand,
}

#[derive(Debug, Subcommand)]
pub enum ToylabCommand {
    /// Render the grid, run the disentangled-sampling experiment, write a report.
    Demo(DemoArgs),
    /// Render one face.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub runs: usize,
    #[arg(long, default_value_t = dex::toylab::DEFAULT_RENDER_SIZE)]
    pub size: usize,
    /// Number of sampled images to save.
    #[arg(long, default_value_t = 9)]
    pub save_samples: usize,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub tx: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub ty: f64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eye_open: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mouth_curve: f64,
    #[arg(long, default_value_t = dex::toylab::DEFAULT_RENDER_SIZE)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub landmarks_out: Option<PathBuf>,
}

/// SHA-256 of the config's compact JSON, first 16 hex digits.
pub fn config_hash(config: &Config) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(json.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn load_config(cli: &Cli) -> dex::Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::from_json(&std::fs::read_to_string(path)?)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn fail(e: &dex::Error) -> ExitCode {
    let msg = e.message().replace('\n', " ");
    eprintln!("error: {}: {msg}", e.kind());
    ExitCode::from(EXIT_VALIDATION)
}

fn main() -> ExitCode {
    let mut cmd = Cli::command();
    let matches = match cmd.try_get_matches_from_mut(std::env::args_os()) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if cli.version {
        println!(
            "dex {} (config {})",
            env!("CARGO_PKG_VERSION"),
            config_hash(&config)
        );
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("{}", cmd.render_usage());
        return ExitCode::from(EXIT_USAGE);
    };
    match commands::run(command, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
