//! Command implementations behind the `krawtex` binary.
//!
//! Every command writes its outputs plus a `<output>.config.json` echo of
//! the resolved arguments. Nothing time- or host-dependent is written, so
//! identical arguments and seed give identical files.

pub mod args;

use std::ffi::OsString;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use krawtex::colorspace::{rgb_to_ycbcr, ycbcr_to_rgb};
use krawtex::experiments::{sweep_csv, threshold_sweep, ToyConfig};
use krawtex::haze::{dcp_dehaze, synthesize_haze, synthetic_depth, DepthPattern, HazeScene};
use krawtex::metrics::{psnr, psnr_plane, ssim, ssim_image, MetricReport};
use krawtex::neural::features::FeatureBank;
use krawtex::neural::gradcheck::{gradient_check, reports_csv, standard_fragments};
use krawtex::neural::train::{loss_log_csv, train, ModelState, TrainConfig};
use krawtex::neural::{DiscriminatorConfig, GeneratorConfig, LossWeights, Tensor4};
use krawtex::plane::{reflect_pad, PlanarImage};
use krawtex::transform::{band_energy_stats, band_stats_csv, kcl_apply, roundtrip_report, BandStat, CubeMode};
use krawtex::{dataio, BasisSet, DatasetManifest};

use args::{
    AnalyzeArgs, BasisArgs, Cli, Command, DehazeArgs, EvaluateArgs, GradcheckArgs, Mode, Pattern, SweepArgs,
    SynthesizeArgs, TrainArgs, TransformArgs,
};

pub const SEED_ENV: &str = "KRAWTEX_SEED";

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments; exit code 2.
    Usage(String),
    /// The run itself failed; exit code 1.
    Runtime { kind: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Runtime { kind, .. } => kind,
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        let message = match self {
            CliError::Usage(m) | CliError::Runtime { message: m, .. } => m,
        };
        serde_json::json!({ "error": self.kind(), "message": message }).to_string()
    }

    fn runtime(kind: &'static str, message: impl Into<String>) -> Self {
        CliError::Runtime {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json_line())
    }
}

impl std::error::Error for CliError {}

impl From<krawtex::Error> for CliError {
    fn from(e: krawtex::Error) -> Self {
        match e {
            krawtex::Error::InvalidParameter(m) => CliError::Usage(m),
            other => CliError::runtime(other.kind(), other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime("io", e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// `--seed` wins, then the environment value, then 0.
pub fn resolve_seed(flag: Option<u64>, env: Option<OsString>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        None => Ok(0),
        Some(v) => v
            .to_str()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
    }
}

/// Runs one parsed invocation and returns the summary line for stdout.
pub fn run(cli: &Cli) -> Result<String> {
    let seed = resolve_seed(cli.seed, std::env::var_os(SEED_ENV))?;
    match &cli.command {
        Command::Basis(a) => basis(a, seed),
        Command::Analyze(a) => analyze(a, seed),
        Command::Synthesize(a) => synthesize(a, seed),
        Command::Transform(a) => transform(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Dehaze(a) => dehaze(a, seed),
        Command::Evaluate(a) => evaluate(a, seed),
        Command::Gradcheck(a) => gradcheck(a, seed),
        Command::Sweep(a) => sweep(a, seed),
    }
}

#[derive(Serialize)]
struct Echo<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    args: &'a T,
}

pub fn echo_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn write_echo<T: Serialize>(out: &Path, command: &str, seed: u64, args: &T) -> Result<()> {
    let echo = Echo {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        args,
    };
    let mut text = serde_json::to_string_pretty(&echo).map_err(|e| CliError::runtime("serialize", e.to_string()))?;
    text.push('\n');
    fs::write(echo_path(out), text)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn basis(a: &BasisArgs, seed: u64) -> Result<String> {
    let set = BasisSet::with_p(a.p)?;
    write_text(&a.out, &set.to_csv())?;
    write_echo(&a.out, "basis", seed, a)?;
    Ok(format!("wrote {} filters to {}", set.len(), a.out.display()))
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pgm" | "pnm"))
}

/// Pairs files by name when both paths are directories, otherwise treats
/// both as single files.
pub fn image_pairs(a: &Path, b: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if !a.is_dir() {
        let name = a.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        return Ok(vec![(name, a.to_path_buf(), b.to_path_buf())]);
    }
    if !b.is_dir() {
        return Err(CliError::Usage(format!("{} is a directory but {} is not", a.display(), b.display())));
    }
    let mut names: Vec<String> = fs::read_dir(a)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file() && is_image(p))
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::runtime("io", format!("no images in {}", a.display())));
    }
    names
        .into_iter()
        .map(|n| {
            let other = b.join(&n);
            if other.is_file() {
                Ok((n.clone(), a.join(&n), other))
            } else {
                Err(CliError::runtime("io", format!("{} has no counterpart in {}", n, b.display())))
            }
        })
        .collect()
}

fn analyze(a: &AnalyzeArgs, seed: u64) -> Result<String> {
    let basis = BasisSet::with_p(a.p)?;
    let mode = match a.mode {
        Mode::Block => CubeMode::Block,
        Mode::Sliding => CubeMode::Sliding,
    };
    let pairs = image_pairs(&a.hazy, &a.clear)?;
    let mut total: Option<Vec<BandStat>> = None;
    for (_, h, c) in &pairs {
        let hazy = rgb_to_ycbcr(&dataio::load_image(h)?)?.y;
        let clear = rgb_to_ycbcr(&dataio::load_image(c)?)?.y;
        let stats = band_energy_stats(&kcl_apply(&hazy, &basis, mode)?, &kcl_apply(&clear, &basis, mode)?)?;
        match total.as_mut() {
            None => total = Some(stats),
            Some(acc) => {
                for (t, s) in acc.iter_mut().zip(&stats) {
                    t.mean_abs_hazy += s.mean_abs_hazy;
                    t.mean_abs_clear += s.mean_abs_clear;
                    t.mean_diff += s.mean_diff;
                    t.mean_abs_diff += s.mean_abs_diff;
                }
            }
        }
    }
    let mut stats = total.unwrap_or_default();
    let n = pairs.len() as f64;
    for s in &mut stats {
        s.mean_abs_hazy /= n;
        s.mean_abs_clear /= n;
        s.mean_diff /= n;
        s.mean_abs_diff /= n;
    }
    write_text(&a.out, &band_stats_csv(&stats))?;
    write_echo(&a.out, "analyze", seed, a)?;
    Ok(format!("wrote band statistics over {} pairs to {}", pairs.len(), a.out.display()))
}

fn synthesize(a: &SynthesizeArgs, seed: u64) -> Result<String> {
    let airlight = match a.airlight.as_slice() {
        [v] => [*v; 3],
        [r, g, b] => [*r, *g, *b],
        other => return Err(CliError::Usage(format!("--airlight takes 1 or 3 values, got {}", other.len()))),
    };
    if !(a.depth_max >= 0.0 && a.depth_max.is_finite()) {
        return Err(CliError::Usage(format!("--depth-max must be finite and non-negative, got {}", a.depth_max)));
    }
    let clear = dataio::load_image(&a.clear)?;
    let (h, w) = clear.dim();
    let depth = match &a.depth {
        Some(p) => dataio::load_gray(p)?.mapv(|v| v * a.depth_max),
        None => {
            let pattern = match a.pattern {
                Pattern::Ramp => DepthPattern::VerticalRamp,
                Pattern::Radial => DepthPattern::Radial,
                Pattern::Smooth => DepthPattern::Smooth { seed },
            };
            synthetic_depth(h, w, pattern, a.depth_max)
        }
    };
    let scene = HazeScene::new(clear, depth, a.beta, airlight)?;
    dataio::save_image(&synthesize_haze(&scene), &a.out)?;
    if let Some(t) = &a.transmission {
        dataio::save_image(&PlanarImage::luma(scene.transmission())?, t)?;
    }
    write_echo(&a.out, "synthesize", seed, a)?;
    Ok(format!("wrote {}x{} hazy image to {}", w, h, a.out.display()))
}

fn transform(a: &TransformArgs, seed: u64) -> Result<String> {
    let basis = BasisSet::with_p(a.p)?;
    let image = dataio::load_image(&a.input)?;
    let mut report = String::new();
    if a.roundtrip {
        report.push_str("channel,blocks,max_roundtrip_error,max_parseval_error\n");
        for (c, channel) in image.channels().iter().enumerate() {
            let r = roundtrip_report(channel, &basis)?;
            let _ = writeln!(report, "{c},{},{:e},{:e}", r.blocks, r.max_error, r.max_parseval_error);
        }
    } else {
        report.push_str("band,i,j,energy\n");
        let y = rgb_to_ycbcr(&image)?.y;
        let cube = kcl_apply(&y, &basis, CubeMode::Block)?;
        for (k, (&(i, j), map)) in cube.order().iter().zip(cube.maps()).enumerate() {
            let energy = map.iter().map(|v| v * v).sum::<f64>() / map.len() as f64;
            let _ = writeln!(report, "{k},{i},{j},{energy}");
        }
    }
    match &a.out {
        Some(out) => {
            write_text(out, &report)?;
            write_echo(out, "transform", seed, a)?;
            Ok(format!("wrote transform report to {}", out.display()))
        }
        None => Ok(report.trim_end().to_string()),
    }
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<String> {
    let weights = LossWeights {
        feature: a.lambda_feat,
        l1: a.lambda_l1,
        mse: a.lambda_mse,
        gan: a.lambda_gan,
    };
    if [weights.feature, weights.l1, weights.mse, weights.gan]
        .iter()
        .any(|w| !(w.is_finite() && *w >= 0.0))
    {
        return Err(CliError::Usage("loss weights must be finite and non-negative".into()));
    }
    if !(a.lr.is_finite() && a.lr > 0.0) {
        return Err(CliError::Usage(format!("--lr must be positive, got {}", a.lr)));
    }
    if a.batch == 0 || a.patches_per_image == 0 {
        return Err(CliError::Usage("--batch and --patches-per-image must be positive".into()));
    }
    let manifest = DatasetManifest::load(&a.manifest, seed, a.patch, a.patches_per_image)?;
    let data = manifest.patch_set()?;

    let mut state = match &a.resume {
        Some(p) => ModelState::load(p)?,
        None => {
            let mut gcfg = GeneratorConfig::scaled(a.scale);
            gcfg.t_split = a.threshold;
            gcfg.p = a.p;
            ModelState::new(gcfg, DiscriminatorConfig::scaled(a.scale), seed)?
        }
    };
    let bank = match &a.feature_bank {
        Some(p) => FeatureBank::load(p)?,
        None => state.feature_bank(),
    };
    let mut cfg = TrainConfig {
        weights,
        batch_size: a.batch,
        epochs: a.epochs,
        max_steps: a.max_steps,
        ..TrainConfig::default()
    };
    cfg.adam.lr = a.lr;
    let records = train(&mut state, &bank, &data, &cfg, |_| {})?;

    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    state.save(&a.out)?;
    let log = a.log.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".loss.csv");
        PathBuf::from(s)
    });
    write_text(&log, &loss_log_csv(&records))?;
    write_echo(&a.out, "train", seed, a)?;
    Ok(format!(
        "trained {} steps on {} patches; checkpoint {}, log {}",
        records.len(),
        data.len(),
        a.out.display(),
        log.display()
    ))
}

/// Runs the generator on the luma plane only; chroma passes through.
pub fn dehaze_with_model(state: &ModelState, image: &PlanarImage) -> Result<PlanarImage> {
    let ycc = rgb_to_ycbcr(image)?;
    let (h, w) = ycc.dim();
    let min = krawtex::neural::generator::MIN_INPUT;
    let (ph, pw) = (min.saturating_sub(h), min.saturating_sub(w));
    let y = if ph + pw > 0 {
        reflect_pad(&ycc.y, 0, ph, 0, pw)
    } else {
        ycc.y.clone()
    };
    let out = state.generator.infer(&Tensor4::from_planes(&[&y])?)?;
    let new_y = out.plane(0, 0).slice(ndarray::s![..h, ..w]).to_owned();
    Ok(ycbcr_to_rgb(&ycc.with_luma(new_y)?))
}

fn dehaze(a: &DehazeArgs, seed: u64) -> Result<String> {
    let image = dataio::load_image(&a.input)?;
    let out = match (&a.baseline, &a.model) {
        (Some(_), _) => dcp_dehaze(&image, a.t0, a.patch)?,
        (None, Some(m)) => dehaze_with_model(&ModelState::load(m)?, &image)?,
        (None, None) => return Err(CliError::Usage("either --model or --baseline is required".into())),
    };
    dataio::save_image(&out, &a.out)?;
    write_echo(&a.out, "dehaze", seed, a)?;
    Ok(format!("wrote {}x{} image to {}", out.width(), out.height(), a.out.display()))
}

fn evaluate(a: &EvaluateArgs, seed: u64) -> Result<String> {
    let mut report = MetricReport::default();
    for (name, p, g) in image_pairs(&a.pred, &a.gt)? {
        let pred = dataio::load_image(&p)?;
        let gt = dataio::load_image(&g)?;
        let (ps, ss) = if a.y_only {
            let (py, gy) = (rgb_to_ycbcr(&pred)?.y, rgb_to_ycbcr(&gt)?.y);
            (psnr_plane(&py, &gy, 1.0)?, ssim(&py, &gy)?)
        } else {
            (psnr(&pred, &gt, 1.0)?, ssim_image(&pred, &gt)?)
        };
        report.push(name, ps, ss);
    }
    write_text(&a.out, &report.to_csv())?;
    write_echo(&a.out, "evaluate", seed, a)?;
    Ok(format!(
        "mean PSNR {:.4} dB, mean SSIM {:.6} over {} images",
        report.mean_psnr(),
        report.mean_ssim(),
        report.images.len()
    ))
}

fn gradcheck(a: &GradcheckArgs, seed: u64) -> Result<String> {
    if !(a.eps > 0.0 && a.eps.is_finite()) {
        return Err(CliError::Usage(format!("--eps must be positive, got {}", a.eps)));
    }
    let reports = standard_fragments(seed, a.scale, a.side)?
        .iter()
        .map(|f| gradient_check(f, a.eps, a.samples, seed))
        .collect::<krawtex::Result<Vec<_>>>()?;
    write_text(&a.out, &reports_csv(&reports))?;
    write_echo(&a.out, "gradcheck", seed, a)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.fragment.as_str()).collect();
    if failed.is_empty() {
        Ok(format!("{} fragments passed; report in {}", reports.len(), a.out.display()))
    } else {
        Err(CliError::runtime("gradcheck_failed", format!("fragments over tolerance: {}", failed.join(", "))))
    }
}

fn sweep(a: &SweepArgs, seed: u64) -> Result<String> {
    let base = ToyConfig {
        pairs: a.pairs,
        held_out: a.held_out,
        side: a.side,
        scale: a.scale,
        steps: a.steps,
        batch_size: a.batch,
        seed,
        ..ToyConfig::default()
    };
    let rows = threshold_sweep(&base, &a.thresholds)?;
    write_text(&a.out, &sweep_csv(&rows))?;
    write_echo(&a.out, "sweep", seed, a)?;
    Ok(format!("wrote {} thresholds to {}", rows.len(), a.out.display()))
}
