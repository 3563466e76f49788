use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{image_gradient, AffineTransform, ImageRaster, Point, Rect};

/// Grid points per axis used by [`registration_error`].
pub const GRID_SIZE: usize = 32;

/// Discrepancy between an estimated and a true transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Mean of `|T_est(x) − T_truth(x)|` over the grid, captured pixels.
    pub mean_displacement: f64,
    pub max_displacement: f64,
    /// `|√det S_est − √det S_truth|`.
    pub scale_error: f64,
    /// Difference of the polar-decomposition rotation angles, radians.
    pub rotation_error: f64,
}

/// Compares `estimated` to `truth` over a `32 × 32` grid spanning `region`
/// (digital-frame pixels).
pub fn registration_error(
    estimated: &AffineTransform,
    truth: &AffineTransform,
    region: Rect,
) -> ErrorReport {
    let axis = |start: usize, len: usize, i: usize| {
        start as f64 + len.saturating_sub(1) as f64 * i as f64 / (GRID_SIZE - 1) as f64
    };
    let (mut sum, mut max) = (0.0, 0.0f64);
    for j in 0..GRID_SIZE {
        for i in 0..GRID_SIZE {
            let p = Point::new(axis(region.x, region.w, i), axis(region.y, region.h, j));
            let d = estimated.apply(p).distance(&truth.apply(p));
            sum += d;
            max = max.max(d);
        }
    }
    let dtheta = estimated.rotation_angle() - truth.rotation_angle();
    ErrorReport {
        mean_displacement: sum / (GRID_SIZE * GRID_SIZE) as f64,
        max_displacement: max,
        scale_error: (estimated.scale() - truth.scale()).abs(),
        rotation_error: dtheta.sin().atan2(dtheta.cos()).abs(),
    }
}

/// `mean|pred − Y| + λ·max|∇pred − ∇digital|`, the maximum running over
/// both gradient components and all channels.
pub fn dual_reference_loss(
    pred: &ImageRaster,
    captured_hr: &ImageRaster,
    digital: &ImageRaster,
    lambda: f64,
) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    pred.ensure_same_dims(captured_hr)?;
    pred.ensure_same_dims(digital)?;
    let l1 = compensated_sum(pred.data().iter().zip(captured_hr.data()).map(|(a, b)| (a - b).abs()))
        / pred.data().len() as f64;
    let gp = image_gradient(pred)?;
    let gd = image_gradient(digital)?;
    let linf = gp
        .components()
        .zip(gd.components())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(l1 + lambda * linf)
}

/// Neumaier summation; keeps the mean of a constant difference at that
/// constant to within an ulp regardless of image size.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}
