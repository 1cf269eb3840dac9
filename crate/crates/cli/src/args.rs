use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "krawtex", version, about = "Krawtchouk moment-domain image dehazing")]
pub struct Cli {
    /// Run seed; falls back to KRAWTEX_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump the 64 separable 8x8 basis filters as CSV.
    Basis(BasisArgs),
    /// Per-band coefficient statistics over hazy/clear image pairs.
    Analyze(AnalyzeArgs),
    /// Render a hazy image from a clear image and a depth map.
    Synthesize(SynthesizeArgs),
    /// Block transform diagnostics for one image.
    Transform(TransformArgs),
    /// Train the generator and discriminator on a manifest.
    Train(TrainArgs),
    /// Dehaze an image with a trained model or the dark channel prior.
    Dehaze(DehazeArgs),
    /// PSNR and SSIM of predictions against references.
    Evaluate(EvaluateArgs),
    /// Finite-difference checks of every layer kind and both networks.
    Gradcheck(GradcheckArgs),
    /// Toy-scale training runs over several band thresholds.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct BasisArgs {
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value = "basis.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Block,
    Sliding,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Hazy image or directory.
    #[arg(long)]
    pub hazy: PathBuf,
    /// Clear image or directory; files pair up by name.
    #[arg(long)]
    pub clear: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, value_enum, default_value_t = Mode::Block)]
    pub mode: Mode,
    #[arg(long, default_value = "band_stats.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Ramp,
    Radial,
    Smooth,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub clear: PathBuf,
    /// Grayscale depth image; a generated pattern is used when absent.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub depth_max: f64,
    #[arg(long, value_enum, default_value_t = Pattern::Ramp)]
    pub pattern: Pattern,
    #[arg(long)]
    pub beta: f64,
    /// One value for all channels or three comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 1..=3)]
    pub airlight: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the transmission map here.
    #[arg(long)]
    pub transmission: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TransformArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Forward and inverse block transform per channel, reporting the
    /// reconstruction and energy errors.
    #[arg(long)]
    pub roundtrip: bool,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "out.ckpt")]
    pub out: PathBuf,
    /// Loss log; defaults to the checkpoint path with `.loss.csv` appended.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 15)]
    pub batch: usize,
    #[arg(long, default_value_t = 128)]
    pub patch: usize,
    #[arg(long, default_value_t = 4)]
    pub patches_per_image: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Band threshold: bands below go to the low branch.
    #[arg(long = "t", default_value_t = 60)]
    pub threshold: usize,
    #[arg(long, default_value_t = 0.25)]
    pub scale: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_feat: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_l1: f64,
    #[arg(long, default_value_t = 0.04)]
    pub lambda_mse: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lambda_gan: f64,
    /// Stop after this many steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Continue from a checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Feature bank tensor file replacing the seeded random bank.
    #[arg(long)]
    pub feature_bank: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Dcp,
}

#[derive(Debug, Args, Serialize)]
pub struct DehazeArgs {
    #[arg(long, required_unless_present = "baseline")]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "model")]
    pub baseline: Option<Baseline>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub t0: f64,
    #[arg(long, default_value_t = 15)]
    pub patch: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Predicted image or directory.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference image or directory; files pair up by name.
    #[arg(long)]
    pub gt: PathBuf,
    /// Score the luma plane only.
    #[arg(long)]
    pub y_only: bool,
    #[arg(long, default_value = "metrics.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0.25)]
    pub scale: f64,
    /// Input side for the full networks.
    #[arg(long, default_value_t = 16)]
    pub side: usize,
    /// Entries sampled per tensor; every entry when absent.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    #[arg(long, default_value = "gradcheck.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![40, 50, 60, 63])]
    pub thresholds: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub pairs: usize,
    #[arg(long, default_value_t = 10)]
    pub held_out: usize,
    #[arg(long, default_value_t = 64)]
    pub side: usize,
    #[arg(long, default_value_t = 0.25)]
    pub scale: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 5)]
    pub batch: usize,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}
