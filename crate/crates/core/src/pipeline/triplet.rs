//! Resolution-harmonized `(X, Y, digital)` triplets cropped to the content
//! window.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::RegistrationResult;
use crate::pattern::LayoutSpec;
use crate::raster::{io, resample, resample_to, warp_affine, AffineTransform, ImageRaster, Interpolation, Rect};

/// A capture together with its registration against the layout.
#[derive(Debug, Clone, Copy)]
pub struct RegisteredCapture<'a> {
    pub image: &'a ImageRaster,
    pub result: &'a RegistrationResult,
}

/// Metadata of one emitted triplet; paths are relative to the dataset
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub id: String,
    pub lr: PathBuf,
    pub hr: PathBuf,
    pub digital: PathBuf,
    /// Common size of the three images.
    pub width: usize,
    pub height: usize,
    /// Digital-frame region the images cover.
    pub crop: Rect,
    pub lr_registration: RegistrationResult,
    pub hr_registration: RegistrationResult,
    /// Ground-truth sidecars of simulated captures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hr_truth: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Triplet {
    pub lr: ImageRaster,
    pub hr: ImageRaster,
    pub digital: ImageRaster,
    pub record: TripletRecord,
}

impl Triplet {
    /// Writes the three images as 16-bit PNGs under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::save(&self.lr, dir.join(&self.record.lr))?;
        io::save(&self.hr, dir.join(&self.record.hr))?;
        io::save(&self.digital, dir.join(&self.record.digital))?;
        Ok(())
    }
}

/// Map from a `gw × gh` grid covering `crop` (pixel-area aligned) to
/// digital-frame coordinates.
fn grid_to_digital(crop: Rect, gw: usize, gh: usize) -> AffineTransform {
    let kx = crop.w as f64 / gw as f64;
    let ky = crop.h as f64 / gh as f64;
    AffineTransform::new(
        [[kx, 0.0], [0.0, ky]],
        [crop.x as f64 - 0.5 + 0.5 * kx, crop.y as f64 - 0.5 + 0.5 * ky],
    )
    .expect("positive grid scale")
}

/// Crops the content window out of both captures and the digital frame and
/// brings all three to the HR crop size: the LR capture is resampled onto
/// a grid `sr_factor` times coarser and upsampled by `sr_factor`, the
/// digital crop is downsampled (bicubic).
pub fn build_triplet(
    id: &str,
    x: RegisteredCapture<'_>,
    y: RegisteredCapture<'_>,
    digital_frame: &ImageRaster,
    layout: &LayoutSpec,
    sr_factor: usize,
) -> Result<Triplet> {
    for (name, reg) in [("LR", x.result), ("HR", y.result)] {
        if !reg.converged {
            return Err(Error::TripletRejected(format!(
                "{id}: {name} registration did not converge after {} iterations",
                reg.iters
            )));
        }
    }
    if sr_factor == 0 {
        return Err(Error::InvalidParameter("sr factor must be positive".into()));
    }
    let (sx, sy) = (x.result.transform.scale(), y.result.transform.scale());
    let ratio = sy / sx;
    if (ratio / sr_factor as f64 - 1.0).abs() > 0.1 {
        return Err(Error::InvalidParameter(format!(
            "{id}: HR/LR scale ratio {ratio:.3} does not match sr factor {sr_factor}"
        )));
    }
    let crop = layout.content;
    let cells = |len: usize| ((len as f64 * sy / sr_factor as f64).round() as usize).max(1);
    let (lw, lh) = (cells(crop.w), cells(crop.h));
    let (hw, hh) = (lw * sr_factor, lh * sr_factor);

    let hr_map = y.result.transform.compose(&grid_to_digital(crop, hw, hh));
    let hr = warp_affine(y.image, &hr_map, hw, hh)?;
    let lr_map = x.result.transform.compose(&grid_to_digital(crop, lw, lh));
    let lr_small = warp_affine(x.image, &lr_map, lw, lh)?;
    let lr = resample(&lr_small, sr_factor as f64, Interpolation::Bicubic)?;
    let digital = resample_to(&digital_frame.crop(crop)?, hw, hh, Interpolation::Bicubic)?;
    debug_assert_eq!((lr.width(), lr.height()), (hw, hh));

    let record = TripletRecord {
        id: id.to_string(),
        lr: PathBuf::from(format!("{id}_lr.png")),
        hr: PathBuf::from(format!("{id}_hr.png")),
        digital: PathBuf::from(format!("{id}_digital.png")),
        width: hw,
        height: hh,
        crop,
        lr_registration: x.result.clone(),
        hr_registration: y.result.clone(),
        lr_truth: None,
        hr_truth: None,
    };
    Ok(Triplet {
        lr,
        hr,
        digital,
        record,
    })
}
