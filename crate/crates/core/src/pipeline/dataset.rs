//! Batch triplet builds driven by a jobs file.
//!
//! ```json
//! {
//!   "layout": "layout.json",
//!   "register": { "refine": { "beta": 1000.0 } },
//!   "jobs": [
//!     { "id": "0001", "digital": "img/0001.png", "kind": "simulated",
//!       "lr_truth": { "S": [[0.25, 0], [0, 0.25]], "b": [8, 8], "psf_sigma": 1,
//!                     "noise_sigma": 0.005, "backlight": 0.02, "downscale": 1, "seed": 1 },
//!       "hr_truth": { "...": "..." } },
//!     { "id": "0002", "digital": "img/0002.png", "kind": "captured",
//!       "lr": "cap/0002_lr.png", "hr": "cap/0002_hr.png",
//!       "lr_black": "cap/black_lr.png", "hr_black": "cap/black_hr.png" }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the jobs file's directory. The manifest
//! (`manifest.jsonl`) holds one [`TripletRecord`] per line in job order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::register::{register_transform, subtract_black, RegisterOptions};
use super::triplet::{build_triplet, RegisteredCapture, TripletRecord};
use crate::error::{Error, Result};
use crate::par;
use crate::pattern::{render_target, LayoutSpec};
use crate::raster::{io, ImageRaster};
use crate::sim::{simulate_black, simulate_capture, CaptureGroundTruth};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobsFile {
    pub layout: PathBuf,
    #[serde(default)]
    pub register: RegisterOptions,
    pub jobs: Vec<Job>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    /// Content image placed into the layout's content window.
    pub digital: PathBuf,
    #[serde(flatten)]
    pub source: JobSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum JobSource {
    /// Captures synthesized from the rendered frame.
    Simulated {
        lr_truth: CaptureGroundTruth,
        hr_truth: CaptureGroundTruth,
    },
    /// Existing captures, with optional black frames.
    Captured {
        lr: PathBuf,
        hr: PathBuf,
        #[serde(default)]
        lr_black: Option<PathBuf>,
        #[serde(default)]
        hr_black: Option<PathBuf>,
    },
}

impl JobsFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSummary {
    pub written: usize,
    /// `(job id, reason)` of every dropped job.
    pub rejected: Vec<(String, String)>,
    pub manifest: PathBuf,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

struct JobContext<'a> {
    base: &'a Path,
    out_dir: &'a Path,
    layout: &'a LayoutSpec,
    register: &'a RegisterOptions,
    sr_factor: usize,
}

fn load_capture(ctx: &JobContext<'_>, image: &Path, black: Option<&PathBuf>) -> Result<ImageRaster> {
    let img = io::load(resolve(ctx.base, image))?;
    match black {
        Some(b) => subtract_black(&img, &io::load(resolve(ctx.base, b))?),
        None => Ok(img),
    }
}

fn simulated(frame: &ImageRaster, layout: &LayoutSpec, truth: &CaptureGroundTruth) -> Result<ImageRaster> {
    subtract_black(&simulate_capture(frame, truth)?, &simulate_black(layout, truth)?)
}

fn run_job(ctx: &JobContext<'_>, job: &Job) -> Result<TripletRecord> {
    let digital = io::load(resolve(ctx.base, &job.digital))?;
    let frame = render_target(&digital, ctx.layout)?;
    let (x, y, truths) = match &job.source {
        JobSource::Simulated { lr_truth, hr_truth } => (
            simulated(&frame, ctx.layout, lr_truth)?,
            simulated(&frame, ctx.layout, hr_truth)?,
            Some((lr_truth, hr_truth)),
        ),
        JobSource::Captured {
            lr,
            hr,
            lr_black,
            hr_black,
        } => (
            load_capture(ctx, lr, lr_black.as_ref())?,
            load_capture(ctx, hr, hr_black.as_ref())?,
            None,
        ),
    };
    let xr = register_transform(&x, ctx.layout, ctx.register).map_err(|e| e.at("LR registration"))?;
    let yr = register_transform(&y, ctx.layout, ctx.register).map_err(|e| e.at("HR registration"))?;
    let mut triplet = build_triplet(
        &job.id,
        RegisteredCapture { image: &x, result: &xr.result },
        RegisteredCapture { image: &y, result: &yr.result },
        &frame,
        ctx.layout,
        ctx.sr_factor,
    )?;
    if let Some((lt, ht)) = truths {
        let (lp, hp) = (
            PathBuf::from(format!("{}_lr_truth.json", job.id)),
            PathBuf::from(format!("{}_hr_truth.json", job.id)),
        );
        lt.save(ctx.out_dir.join(&lp))?;
        ht.save(ctx.out_dir.join(&hp))?;
        triplet.record.lr_truth = Some(lp);
        triplet.record.hr_truth = Some(hp);
    }
    triplet.write(ctx.out_dir)?;
    Ok(triplet.record)
}

/// Builds every job of `jobs_path` into `out_dir`. Jobs run in parallel;
/// the manifest is written once, in job order. Failed jobs are logged and
/// skipped.
pub fn build_dataset(jobs_path: &Path, out_dir: &Path, sr_factor: usize) -> Result<DatasetSummary> {
    let jobs = JobsFile::load(jobs_path)?;
    let base = jobs_path.parent().unwrap_or(Path::new("."));
    let layout = LayoutSpec::load(resolve(base, &jobs.layout))?;
    jobs.register.refine.validate()?;
    fs::create_dir_all(out_dir)?;
    let ctx = JobContext {
        base,
        out_dir,
        layout: &layout,
        register: &jobs.register,
        sr_factor,
    };
    let mut ids = std::collections::HashSet::new();
    if let Some(dup) = jobs.jobs.iter().find(|j| !ids.insert(j.id.as_str())) {
        return Err(Error::InvalidParameter(format!("duplicate job id {:?}", dup.id)));
    }
    let outcomes = par::map_indexed(jobs.jobs.len(), |i| run_job(&ctx, &jobs.jobs[i]));

    let manifest = out_dir.join(MANIFEST_NAME);
    let mut file = std::io::BufWriter::new(fs::File::create(&manifest)?);
    let mut summary = DatasetSummary {
        manifest: manifest.clone(),
        ..Default::default()
    };
    for (job, outcome) in jobs.jobs.iter().zip(outcomes) {
        match outcome {
            Ok(record) => {
                serde_json::to_writer(&mut file, &record)?;
                file.write_all(b"\n")?;
                summary.written += 1;
            }
            Err(e) => {
                log::warn!("job {} rejected: {e}", job.id);
                summary.rejected.push((job.id.clone(), e.to_string()));
            }
        }
    }
    file.flush()?;
    Ok(summary)
}
