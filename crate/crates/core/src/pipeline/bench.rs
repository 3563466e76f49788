//! Seeded precision experiment: random similarity captures of a textured
//! frame, registered and compared with the simulator's ground truth.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{registration_error, ErrorReport};
use super::register::{register_transform, subtract_black, RegisterOptions};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::pattern::{make_layout, render_target, LayoutSpec};
use crate::raster::{AffineTransform, ImageRaster, Point};
use crate::sim::{simulate_black, simulate_capture, CaptureGroundTruth};

/// Frame design, degradations and the distribution of truth transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionProfile {
    pub name: String,
    pub canvas: usize,
    pub marker_side: usize,
    pub bar_period: usize,
    pub margin: usize,
    pub psf_sigma: f64,
    pub noise_sigma: f64,
    pub backlight: f64,
    pub downscale: f64,
    /// Isotropic scale drawn from `[1 − d, 1 + d]`.
    pub scale_deviation: f64,
    pub max_rotation_deg: f64,
    /// Per-axis translation bound, digital pixels.
    pub max_shift: f64,
    /// Offset keeping the whole frame inside the sensor, sensor pixels.
    pub padding: f64,
    pub register: RegisterOptions,
}

impl PrecisionProfile {
    /// 1024² canvas, PSF σ 1, noise σ 0.005, backlight 0.02, downscale 2.
    pub fn default_profile() -> Self {
        PrecisionProfile {
            name: "default".into(),
            canvas: 1024,
            marker_side: 64,
            bar_period: 16,
            margin: 96,
            psf_sigma: 1.0,
            noise_sigma: 0.005,
            backlight: 0.02,
            downscale: 2.0,
            scale_deviation: 0.05,
            max_rotation_deg: 1.0,
            max_shift: 10.0,
            padding: 64.0,
            register: RegisterOptions::default(),
        }
    }

    /// Smaller canvas with the same degradations, for quick checks.
    pub fn quick_profile() -> Self {
        PrecisionProfile {
            name: "quick".into(),
            canvas: 512,
            marker_side: 48,
            margin: 72,
            ..Self::default_profile()
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default_profile()),
            "quick" => Ok(Self::quick_profile()),
            other => Err(Error::InvalidParameter(format!(
                "unknown profile {other:?} (expected default or quick)"
            ))),
        }
    }

    pub fn layout(&self) -> Result<LayoutSpec> {
        make_layout(self.canvas, self.canvas, self.marker_side, self.bar_period, self.margin)
    }

    /// Ground truth of trial `seed`: a similarity about the canvas center.
    pub fn draw_truth(&self, seed: u64) -> Result<CaptureGroundTruth> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = rng.random_range(1.0 - self.scale_deviation..=1.0 + self.scale_deviation);
        let max_angle = self.max_rotation_deg * PI / 180.0;
        let angle = rng.random_range(-max_angle..=max_angle);
        let shift = [
            rng.random_range(-self.max_shift..=self.max_shift) + self.padding,
            rng.random_range(-self.max_shift..=self.max_shift) + self.padding,
        ];
        let c = (self.canvas as f64 - 1.0) / 2.0;
        Ok(CaptureGroundTruth {
            transform: AffineTransform::similarity_about(scale, angle, Point::new(c, c), shift)?,
            psf_sigma: self.psf_sigma,
            noise_sigma: self.noise_sigma,
            backlight: self.backlight,
            downscale: self.downscale,
            seed,
        })
    }
}

/// Smooth random texture: a few oriented sinusoids over a soft gradient.
fn synthetic_content(w: usize, h: usize, seed: u64) -> Result<ImageRaster> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let period = rng.random_range(12.0..80.0);
            let dir = rng.random_range(0.0..PI);
            (
                dir.cos() / period,
                dir.sin() / period,
                rng.random_range(0.0..1.0),
                rng.random_range(0.02..0.07),
            )
        })
        .collect();
    ImageRaster::from_fn(w, h, 1, |x, y, _| {
        let (x, y) = (x as f64, y as f64);
        let base = 0.35 + 0.2 * x / w as f64 + 0.1 * y / h as f64;
        base + waves
            .iter()
            .map(|(fx, fy, ph, a)| a * (2.0 * PI * (fx * x + fy * y + ph)).cos())
            .sum::<f64>()
    })
}

/// One row of the per-trial table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub truth_scale: f64,
    pub truth_rotation: f64,
    pub spatial: ErrorReport,
    pub refined: ErrorReport,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSummary {
    pub trials: usize,
    pub mean_displacement: f64,
    pub max_displacement: f64,
    pub mean_scale_error: f64,
    pub mean_rotation_error: f64,
    pub spatial_mean_displacement: f64,
    /// Trials whose refined mean displacement beats the centroid-only one.
    pub improved_trials: usize,
    pub converged_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub profile: PrecisionProfile,
    pub seed: u64,
    pub summary: PrecisionSummary,
    pub trials: Vec<TrialRecord>,
}

fn run_trial(profile: &PrecisionProfile, layout: &LayoutSpec, trial: usize, seed: u64) -> Result<TrialRecord> {
    let truth = profile.draw_truth(seed)?;
    let content = synthetic_content(layout.content.w, layout.content.h, seed)?;
    let frame = render_target(&content, layout)?;
    let captured = simulate_capture(&frame, &truth)?;
    let black = simulate_black(layout, &truth)?;
    let clean = subtract_black(&captured, &black)?;
    let reg = register_transform(&clean, layout, &profile.register)?;
    let effective = truth.effective_transform();
    Ok(TrialRecord {
        trial,
        seed,
        truth_scale: truth.transform.scale(),
        truth_rotation: truth.transform.rotation_angle(),
        spatial: registration_error(&reg.spatial_transform(), &effective, layout.content),
        refined: registration_error(&reg.result.transform, &effective, layout.content),
        iters: reg.result.iters,
        converged: reg.result.converged,
    })
}

/// Runs `trials` seeded trials (seed `seed + i`) under `execution`.
pub fn run_precision(
    profile: &PrecisionProfile,
    trials: usize,
    seed: u64,
    execution: Execution,
) -> Result<PrecisionReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let layout = profile.layout()?;
    let records = execution.run(|| {
        par::map_indexed(trials, |i| {
            run_trial(profile, &layout, i, seed.wrapping_add(i as u64))
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&TrialRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let summary = PrecisionSummary {
        trials: records.len(),
        mean_displacement: mean(&|r| r.refined.mean_displacement),
        max_displacement: records.iter().map(|r| r.refined.max_displacement).fold(0.0, f64::max),
        mean_scale_error: mean(&|r| r.refined.scale_error),
        mean_rotation_error: mean(&|r| r.refined.rotation_error),
        spatial_mean_displacement: mean(&|r| r.spatial.mean_displacement),
        improved_trials: records
            .iter()
            .filter(|r| r.refined.mean_displacement < r.spatial.mean_displacement)
            .count(),
        converged_trials: records.iter().filter(|r| r.converged).count(),
    };
    Ok(PrecisionReport {
        profile: profile.clone(),
        seed,
        summary,
        trials: records,
    })
}

impl PrecisionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "trial,seed,truth_scale,truth_rotation,spatial_mean_disp,spatial_max_disp,\
             mean_disp,max_disp,scale_error,rotation_error,iters,converged\n",
        );
        for r in &self.trials {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.trial,
                r.seed,
                r.truth_scale,
                r.truth_rotation,
                r.spatial.mean_displacement,
                r.spatial.max_displacement,
                r.refined.mean_displacement,
                r.refined.max_displacement,
                r.refined.scale_error,
                r.refined.rotation_error,
                r.iters,
                r.converged
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `precision_<profile>.csv` and `.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("precision_{}.csv", self.profile.name));
        let json = dir.join(format!("precision_{}.json", self.profile.name));
        std::fs::write(&csv, self.to_csv())?;
        std::fs::write(&json, self.to_json() + "\n")?;
        Ok((csv, json))
    }
}
