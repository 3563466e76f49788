use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::{refine_dual_domain, RefineOptions, RegistrationResult};
use crate::pattern::LayoutSpec;
use crate::raster::{warp_affine, AffineTransform, ImageRaster};
use crate::spatial::{spatial_register, SpatialFit, SpatialOptions};

/// `max(captured − black, 0)` pixelwise.
pub fn subtract_black(captured: &ImageRaster, black: &ImageRaster) -> Result<ImageRaster> {
    let black = if black.channels() != captured.channels() && black.channels() == 1 {
        black.with_channels(captured.channels())?
    } else {
        black.clone()
    };
    captured.zip_map(&black, |c, b| (c - b).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RegisterOptions {
    pub spatial: SpatialOptions,
    pub refine: RefineOptions,
    /// Rough digital → captured guess for the marker search. Estimated
    /// from the bright frame structure when absent.
    pub coarse: Option<AffineTransform>,
}

/// Both registration stages of one capture.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRegistration {
    pub spatial: SpatialFit,
    pub result: RegistrationResult,
}

impl PairRegistration {
    /// Centroid-only estimate, digital → captured.
    pub fn spatial_transform(&self) -> AffineTransform {
        self.spatial.digital_to_captured()
    }
}

/// Marker centroids, closed-form fit, then joint refinement.
pub fn register_transform(
    captured: &ImageRaster,
    layout: &LayoutSpec,
    opts: &RegisterOptions,
) -> Result<PairRegistration> {
    let spatial = spatial_register(captured, layout, opts.coarse.as_ref(), &opts.spatial)
        .map_err(|e| e.at("spatial registration"))?;
    let result = refine_dual_domain(
        captured,
        &spatial.digital_to_captured(),
        &spatial.anchors,
        &layout.bars,
        &opts.refine,
    )
    .map_err(|e| e.at("dual-domain refinement"))?;
    Ok(PairRegistration { spatial, result })
}

/// Registers `captured` against the layout and resamples it onto the
/// digital frame's grid.
pub fn register_pair(
    captured: &ImageRaster,
    digital_frame: &ImageRaster,
    layout: &LayoutSpec,
    opts: &RegisterOptions,
) -> Result<(ImageRaster, RegistrationResult)> {
    let (w, h) = (layout.canvas.w, layout.canvas.h);
    if (digital_frame.width(), digital_frame.height()) != (w, h) {
        return Err(Error::DimensionMismatch {
            left: digital_frame.dims(),
            right: (w, h, digital_frame.channels()),
        }
        .at("input check"));
    }
    let reg = register_transform(captured, layout, opts)?;
    let aligned = warp_affine(captured, &reg.result.transform, w, h).map_err(|e| e.at("alignment warp"))?;
    Ok((aligned, reg.result))
}
