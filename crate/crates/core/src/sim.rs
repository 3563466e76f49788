//! Camera placement calculator and a forward model of the screen capture
//! with known ground truth.
//!
//! Forward model, in order: warp by the truth transform, Gaussian PSF,
//! downscale (with anti-alias prefilter), constant backlight, additive
//! Gaussian noise, clamp to `[0, 1]`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{render_black, render_target, LayoutSpec};
use crate::raster::{
    gaussian_blur, resample, warp_affine, AffineTransform, ImageRaster, Interpolation, Point,
};

/// Camera and screen parameters. Lengths: `focal` and `distance` in mm,
/// pitches in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraScreenGeometry {
    pub focal: f64,
    pub distance: f64,
    pub screen_pitch: f64,
    pub sensor_pitch: f64,
}

impl CameraScreenGeometry {
    pub fn new(focal: f64, distance: f64, screen_pitch: f64, sensor_pitch: f64) -> Result<Self> {
        let g = CameraScreenGeometry {
            focal,
            distance,
            screen_pitch,
            sensor_pitch,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.focal, self.distance, self.screen_pitch, self.sensor_pitch];
        if !all.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "geometry values must be positive: {self:?}"
            )));
        }
        if self.distance <= self.focal {
            return Err(Error::InvalidParameter(format!(
                "object distance {} mm must exceed the focal length {} mm",
                self.distance, self.focal
            )));
        }
        Ok(())
    }
}

/// Size of one screen pixel imaged on the sensor, `u_s·f/d` (µm).
pub fn imaged_pixel_size(g: &CameraScreenGeometry) -> f64 {
    g.screen_pitch * g.focal / g.distance
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoireBound {
    /// `2·f·u_s/u_c`, mm.
    pub min_distance: f64,
    /// Whether the geometry's distance exceeds the bound.
    pub satisfied: bool,
}

/// Smallest moiré-free object distance, `2·f·u_s/u_c` (mm).
pub fn min_moire_distance(g: &CameraScreenGeometry) -> MoireBound {
    let min_distance = 2.0 * g.focal * g.screen_pitch / g.sensor_pitch;
    MoireBound {
        min_distance,
        satisfied: g.distance > min_distance,
    }
}

/// Degradation parameters of one simulated capture.
///
/// `transform` maps digital-frame coordinates to sensor-resolution
/// coordinates, before the downscale; [`CaptureGroundTruth::effective_transform`]
/// gives the map into the delivered image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureGroundTruth {
    #[serde(flatten)]
    pub transform: AffineTransform,
    pub psf_sigma: f64,
    pub noise_sigma: f64,
    pub backlight: f64,
    pub downscale: f64,
    pub seed: u64,
}

impl CaptureGroundTruth {
    /// Degradation-free capture under `transform`.
    pub fn ideal(transform: AffineTransform) -> Self {
        CaptureGroundTruth {
            transform,
            psf_sigma: 0.0,
            noise_sigma: 0.0,
            backlight: 0.0,
            downscale: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.psf_sigma >= 0.0 && self.psf_sigma.is_finite()) {
            return bad(format!("psf_sigma must be >= 0, got {}", self.psf_sigma));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.backlight) {
            return bad(format!("backlight must be in [0, 1), got {}", self.backlight));
        }
        if !(self.downscale > 0.0 && self.downscale.is_finite()) {
            return bad(format!("downscale must be > 0, got {}", self.downscale));
        }
        Ok(())
    }

    /// Digital → delivered-image map. Output pixel `q` of the downscale
    /// samples its input at `d·(q + 0.5) − 0.5`, so `q = (p + 0.5)/d − 0.5`.
    pub fn effective_transform(&self) -> AffineTransform {
        let k = 1.0 / self.downscale;
        let s = self.transform.s();
        let b = self.transform.b();
        AffineTransform::new(
            [[k * s[0][0], k * s[0][1]], [k * s[1][0], k * s[1][1]]],
            [k * (b[0] + 0.5) - 0.5, k * (b[1] + 0.5) - 0.5],
        )
        .expect("scaling by a positive factor keeps det > 0")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: CaptureGroundTruth = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// Output size: the bounding box of the mapped frame corners plus a
/// symmetric margin equal to the top-left offset.
fn output_extent(w: usize, h: usize, t: &AffineTransform) -> Result<(usize, usize)> {
    let corners = [
        Point::new(0.0, 0.0),
        Point::new((w - 1) as f64, 0.0),
        Point::new(0.0, (h - 1) as f64),
        Point::new((w - 1) as f64, (h - 1) as f64),
    ]
    .map(|p| t.apply(p));
    let min_x = corners.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let min_y = corners.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_x = corners.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let max_y = corners.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    if min_x < 0.0 || min_y < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "truth transform maps the frame to negative coordinates ({min_x:.2}, {min_y:.2})"
        )));
    }
    let ow = max_x.ceil() as usize + 1 + min_x.floor() as usize;
    let oh = max_y.ceil() as usize + 1 + min_y.floor() as usize;
    Ok((ow, oh))
}

fn add_noise(image: &mut ImageRaster, sigma: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidParameter(format!("noise sigma {sigma}: {e}")))?;
    *image = image.map(|v| v + normal.sample(rng));
    Ok(())
}

/// Simulates photographing `target` under `truth`. Deterministic in
/// `truth.seed`.
pub fn simulate_capture(target: &ImageRaster, truth: &CaptureGroundTruth) -> Result<ImageRaster> {
    simulate_stream(target, truth, 0)
}

/// Same model with the noise drawn from RNG stream `stream`, so captures
/// sharing a seed (a frame and its black frame) get independent noise.
fn simulate_stream(target: &ImageRaster, truth: &CaptureGroundTruth, stream: u64) -> Result<ImageRaster> {
    truth.validate()?;
    let (fw, fh) = output_extent(target.width(), target.height(), &truth.transform)?;
    let mut img = warp_affine(target, &truth.transform.inverse(), fw, fh)?;
    if truth.psf_sigma > 0.0 {
        img = gaussian_blur(&img, truth.psf_sigma);
    }
    if truth.downscale != 1.0 {
        img = resample(&img, 1.0 / truth.downscale, Interpolation::Bicubic)?;
    }
    if truth.backlight != 0.0 {
        img = img.map(|v| v + truth.backlight);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    rng.set_stream(stream);
    add_noise(&mut img, truth.noise_sigma, &mut rng)?;
    Ok(img.clamped())
}

/// Everything produced by one simulated LR/HR acquisition.
#[derive(Debug, Clone)]
pub struct CaptureSession {
    /// The rendered display frame.
    pub frame: ImageRaster,
    /// Low-resolution capture.
    pub x: ImageRaster,
    /// High-resolution capture.
    pub y: ImageRaster,
    /// Black-frame captures for LR and HR.
    pub blacks: [ImageRaster; 2],
    pub lr_truth: CaptureGroundTruth,
    pub hr_truth: CaptureGroundTruth,
}

/// Black frame captured with the settings of `truth`.
pub fn simulate_black(layout: &LayoutSpec, truth: &CaptureGroundTruth) -> Result<ImageRaster> {
    simulate_stream(&render_black(layout)?, truth, 1)
}

/// Renders `digital` into the layout once, then simulates the LR and HR
/// captures and their black frames.
pub fn capture_session(
    digital: &ImageRaster,
    layout: &LayoutSpec,
    lr_truth: &CaptureGroundTruth,
    hr_truth: &CaptureGroundTruth,
) -> Result<CaptureSession> {
    let frame = render_target(digital, layout)?;
    let x = simulate_capture(&frame, lr_truth)?;
    let y = simulate_capture(&frame, hr_truth)?;
    let blacks = [simulate_black(layout, lr_truth)?, simulate_black(layout, hr_truth)?];
    Ok(CaptureSession {
        frame,
        x,
        y,
        blacks,
        lr_truth: *lr_truth,
        hr_truth: *hr_truth,
    })
}
