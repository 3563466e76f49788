use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use drti::pattern::{make_layout, render_black, render_target, LayoutSpec};
use drti::pipeline::{
    build_dataset, dual_reference_loss, register_pair, run_precision, PrecisionProfile, RegisterOptions,
};
use drti::raster::io;
use drti::sim::{imaged_pixel_size, min_moire_distance, simulate_capture, CameraScreenGeometry, CaptureGroundTruth};
use drti::Execution;

/// Fiducial-frame rendering, capture simulation and sub-pixel registration.
#[derive(Parser)]
#[command(name = "drti", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Layout files and display frames.
    #[command(subcommand)]
    Pattern(PatternCommand),
    /// Moiré-free camera placement for a screen/sensor pair.
    Placement(PlacementArgs),
    /// Simulates photographing a display frame.
    Simulate(SimulateArgs),
    /// Registers a capture against the layout.
    Register(RegisterArgs),
    /// Builds aligned triplets from a jobs file.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Evaluates the dual-reference loss.
    Loss(LossArgs),
    /// Registration precision experiments.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Subcommand)]
enum PatternCommand {
    /// Places an image into the layout's content window.
    Render {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the all-black frame.
        #[arg(long)]
        black: Option<PathBuf>,
    },
    /// Writes a layout with eight markers and four bar bands.
    Layout {
        #[arg(long, default_value_t = 1024)]
        width: usize,
        #[arg(long, default_value_t = 1024)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        marker: usize,
        #[arg(long, default_value_t = 16)]
        period: usize,
        #[arg(long, default_value_t = 96)]
        margin: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PlacementArgs {
    /// Focal length, mm.
    #[arg(long)]
    focal: f64,
    /// Screen pixel pitch, µm.
    #[arg(long)]
    screen_pitch: f64,
    /// Sensor pixel pitch, µm.
    #[arg(long)]
    sensor_pitch: f64,
    /// Object distance to check, mm.
    #[arg(long)]
    distance: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    frame: PathBuf,
    /// Ground-truth JSON; its seed is replaced by `--seed`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Capture image; the truth sidecar goes next to it as `.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    captured: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    /// Rendered digital frame (canvas size).
    #[arg(long)]
    digital: PathBuf,
    #[arg(long)]
    beta: Option<f64>,
    /// Registration result JSON; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Capture resampled onto the digital frame.
    #[arg(long)]
    aligned: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DatasetCommand {
    Build {
        /// Jobs file.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        sr_factor: usize,
    },
}

#[derive(Args)]
struct LossArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    captured_hr: PathBuf,
    #[arg(long)]
    digital: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Seeded simulate-and-register trials against known truth.
    Precision {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `default` or `quick`.
        #[arg(long, default_value = "default")]
        profile: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Run every trial on one thread.
        #[arg(long)]
        sequential: bool,
    },
}

fn load_image(path: &Path) -> Result<drti::ImageRaster> {
    io::load(path).with_context(|| format!("reading {}", path.display()))
}

fn save_image(image: &drti::ImageRaster, path: &Path) -> Result<()> {
    io::save(image, path).with_context(|| format!("writing {}", path.display()))
}

fn load_layout(path: &Path) -> Result<LayoutSpec> {
    LayoutSpec::load(path).with_context(|| format!("reading layout {}", path.display()))
}

fn pattern(cmd: PatternCommand) -> Result<()> {
    match cmd {
        PatternCommand::Render {
            layout,
            image,
            out,
            black,
        } => {
            let layout = load_layout(&layout)?;
            save_image(&render_target(&load_image(&image)?, &layout)?, &out)?;
            if let Some(path) = black {
                save_image(&render_black(&layout)?, &path)?;
            }
        }
        PatternCommand::Layout {
            width,
            height,
            marker,
            period,
            margin,
            out,
        } => {
            make_layout(width, height, marker, period, margin)?
                .save(&out)
                .with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}

fn placement(args: PlacementArgs) -> Result<()> {
    // the bound does not depend on the distance; any valid one will do
    let probe_distance = args.distance.unwrap_or(args.focal * 2.0);
    let g = CameraScreenGeometry::new(args.focal, probe_distance, args.screen_pitch, args.sensor_pitch)?;
    let bound = min_moire_distance(&g);
    let mut report = serde_json::json!({
        "focal_mm": args.focal,
        "screen_pitch_um": args.screen_pitch,
        "sensor_pitch_um": args.sensor_pitch,
        "min_distance_mm": bound.min_distance,
    });
    if args.distance.is_some() {
        report["distance_mm"] = g.distance.into();
        report["imaged_pixel_um"] = imaged_pixel_size(&g).into();
        report["moire_free"] = bound.satisfied.into();
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    let truth = CaptureGroundTruth {
        seed: args.seed,
        ..CaptureGroundTruth::from_json(&text)?
    };
    let capture = simulate_capture(&load_image(&args.frame)?, &truth)?;
    save_image(&capture, &args.out)?;
    let sidecar = args.out.with_extension("json");
    truth.save(&sidecar).with_context(|| format!("writing {}", sidecar.display()))?;
    Ok(())
}

fn register(args: RegisterArgs) -> Result<()> {
    let layout = load_layout(&args.layout)?;
    let mut opts = RegisterOptions::default();
    if let Some(beta) = args.beta {
        opts.refine.beta = beta;
    }
    let (aligned, result) = register_pair(&load_image(&args.captured)?, &load_image(&args.digital)?, &layout, &opts)?;
    if !result.converged {
        log::warn!("refinement stopped after {} iterations without converging", result.iters);
    }
    let json = serde_json::to_string_pretty(&result)?;
    match args.report {
        Some(path) => std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    if let Some(path) = args.aligned {
        save_image(&aligned, &path)?;
    }
    Ok(())
}

fn dataset(cmd: DatasetCommand) -> Result<()> {
    let DatasetCommand::Build {
        manifest,
        out_dir,
        sr_factor,
    } = cmd;
    let summary = build_dataset(&manifest, &out_dir, sr_factor)?;
    println!("{} triplets written to {}", summary.written, summary.manifest.display());
    for (id, reason) in &summary.rejected {
        println!("rejected {id}: {reason}");
    }
    Ok(())
}

fn loss(args: LossArgs) -> Result<()> {
    let value = dual_reference_loss(
        &load_image(&args.pred)?,
        &load_image(&args.captured_hr)?,
        &load_image(&args.digital)?,
        args.lambda,
    )?;
    println!("{value}");
    Ok(())
}

fn bench(cmd: BenchCommand) -> Result<()> {
    let BenchCommand::Precision {
        trials,
        seed,
        profile,
        out_dir,
        sequential,
    } = cmd;
    let profile = PrecisionProfile::by_name(&profile)?;
    let execution = if sequential { Execution::Sequential } else { Execution::Parallel };
    let report = run_precision(&profile, trials, seed, execution)?;
    let (csv, json) = report.write(&out_dir)?;
    let s = &report.summary;
    println!("{:<28}{:>14}", "metric", "value");
    println!("{:<28}{:>14.6}", "mean displacement (px)", s.mean_displacement);
    println!("{:<28}{:>14.6}", "max displacement (px)", s.max_displacement);
    println!("{:<28}{:>14.3e}", "mean scale error", s.mean_scale_error);
    println!("{:<28}{:>14.3e}", "mean rotation error (rad)", s.mean_rotation_error);
    println!("{:<28}{:>14.6}", "centroid-only mean (px)", s.spatial_mean_displacement);
    println!("{:<28}{:>11}/{}", "improved by refinement", s.improved_trials, s.trials);
    println!("{:<28}{:>11}/{}", "converged", s.converged_trials, s.trials);
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Pattern(cmd) => pattern(cmd),
        Command::Placement(args) => placement(args),
        Command::Simulate(args) => simulate(args),
        Command::Register(args) => register(args),
        Command::Dataset(cmd) => dataset(cmd),
        Command::Loss(args) => loss(args),
        Command::Bench(cmd) => bench(cmd),
    }
}
