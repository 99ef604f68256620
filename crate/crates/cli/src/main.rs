use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use halfcyl::bench::{timing_report, BenchConfig, Resolution};
use halfcyl::geometry::{Homography, Point2};
use halfcyl::io::{load_image, save_png};
use halfcyl::pipeline::{run_stitch, StitchConfig, StitchError};
use halfcyl::synth::{make_synthetic_pair, perspective_about, textured_scene};

#[derive(Parser)]
#[command(name = "halfcyl", version, about = "Stitch two images with a half-cylindrical warp")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stitch a target image onto a reference image.
    Stitch(StitchArgs),
    /// Cut a reference/target pair with known ground truth from one image.
    Synth(SynthArgs),
    /// Write a random textured test scene.
    Scene(SceneArgs),
    /// Time the pipeline with the seam found at full and reduced scale.
    Bench(BenchArgs),
}

#[derive(Args)]
struct StitchArgs {
    reference: PathBuf,
    target: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Downscale divisor for the seam search (power of two).
    #[arg(long, default_value_t = 8)]
    seam_scale: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report as JSON.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Directory for matches, pixel-selection, seam and mask images.
    #[arg(long)]
    save_intermediate: Option<PathBuf>,
    /// Mix the inputs linearly near the seam instead of a hard cut.
    #[arg(long)]
    feather: bool,
    /// RANSAC inlier threshold in pixels.
    #[arg(long, default_value_t = 3.0)]
    ransac_threshold: f64,
    /// Upper end of the focal length search.
    #[arg(long)]
    f_max: Option<f64>,
    /// Report all times as zero so reruns give identical metrics files.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Source image; should be wider than the crops by the non-overlapping part.
    image: PathBuf,
    /// Shared fraction of the crop width.
    #[arg(long, default_value_t = 0.3)]
    overlap: f64,
    /// Perspective coefficient (per pixel) of the tilt applied to the target.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    perspective: f64,
    /// Seeds a sub-pixel shift added to the ground truth.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SceneArgs {
    /// HEIGHTxWIDTH.
    #[arg(long, default_value = "600x1100")]
    size: Resolution,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated HEIGHTxWIDTH list.
    #[arg(long, value_delimiter = ',', default_value = "1500x2000")]
    resolutions: Vec<Resolution>,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 8)]
    seam_scale: usize,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Stitch(args) => stitch(args),
        Command::Synth(args) => synth(args),
        Command::Scene(args) => scene(args),
        Command::Bench(args) => bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error [{}]: {}", failure.stage, failure.message);
            ExitCode::from(failure.code)
        }
    }
}

struct Failure {
    stage: &'static str,
    code: u8,
    message: String,
}

impl From<StitchError> for Failure {
    fn from(e: StitchError) -> Self {
        Failure {
            stage: e.stage(),
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn io_failure(message: impl ToString) -> Failure {
    Failure {
        stage: "io",
        code: 2,
        message: message.to_string(),
    }
}

fn usage_failure(message: impl ToString) -> Failure {
    Failure {
        stage: "config",
        code: 1,
        message: message.to_string(),
    }
}

fn stitch(args: StitchArgs) -> Result<(), Failure> {
    let mut cfg = StitchConfig {
        seam_scale: args.seam_scale,
        seed: args.seed,
        feather: args.feather,
        f_max: args.f_max,
        save_intermediate: args.save_intermediate,
        record_timings: !args.no_timings,
        ..StitchConfig::default()
    };
    cfg.ransac.threshold = args.ransac_threshold;
    let report = run_stitch(
        &args.reference,
        &args.target,
        &args.output,
        args.metrics.as_deref(),
        &cfg,
    )?;
    println!(
        "inliers {}  rmse {:.3} px  s {:.4}  a0 {}  b0 {}  f {:.1}{}",
        report.inlier_count,
        report.alignment_rmse_px,
        report.scale,
        report.a0,
        report.b0,
        report.focal,
        if report.degenerate_focal { " (degenerate)" } else { "" }
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), Failure> {
    let src = load_image(&args.image).map_err(io_failure)?;
    let width = (src.width() as f64 / (2.0 - args.overlap)).floor();
    let height = (src.height() - 2 * (src.height() / 10)) as f64;
    let center = Point2::new((1.0 + width) / 2.0, (1.0 + height) / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let shift = Homography::translation(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let distortion = shift
        .compose(&perspective_about(args.perspective, center))
        .map_err(usage_failure)?;
    let pair = make_synthetic_pair(&src, &distortion, args.overlap).map_err(usage_failure)?;
    std::fs::create_dir_all(&args.output).map_err(io_failure)?;
    save_png(&pair.reference, &args.output.join("ref.png")).map_err(io_failure)?;
    save_png(&pair.target, &args.output.join("tgt.png")).map_err(io_failure)?;
    let truth = serde_json::json!({
        "h_true": pair.h_true.to_row_major(),
        "offset": pair.offset,
        "overlap": args.overlap,
    });
    write_json(&args.output.join("truth.json"), &truth)
}

fn scene(args: SceneArgs) -> Result<(), Failure> {
    let img = textured_scene(args.size.width, args.size.height, 3, args.seed);
    save_png(&img, &args.output).map_err(io_failure)
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let mut cfg = BenchConfig {
        runs: args.runs,
        ..BenchConfig::default()
    };
    cfg.stitch.seam_scale = args.seam_scale;
    let table = timing_report(&args.resolutions, &cfg).map_err(usage_failure)?;
    println!(
        "{:>11} {:>9} {:>13} {:>13} {:>8}",
        "resolution", "warp (s)", "total 1x (s)", "total Nx (s)", "ratio"
    );
    for row in &table.rows {
        println!(
            "{:>11} {:>9.3} {:>13.3} {:>13.3} {:>8.3}",
            row.resolution,
            row.warp_time_s,
            row.total_time_full_s,
            row.total_time_scaled_s,
            row.total_ratio()
        );
    }
    if let Some(path) = args.metrics {
        write_json(&path, &table)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(io_failure)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_failure(format!("{}: {e}", path.display())))
}
