use serde::{Deserialize, Serialize};

use super::{AffineTransform, ImageRaster, Point};
use crate::error::{Error, Result};
use crate::raster::transform::MIN_DET;

/// Result of a bounds-checked bilinear lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub in_bounds: bool,
}

/// Resampling kernel for [`resample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Bilinear,
    /// Catmull-Rom cubic convolution (`a = -0.5`).
    #[default]
    Bicubic,
}

/// Bilinear interpolation of the four neighbours of `p`.
///
/// Points outside `[0, w-1] × [0, h-1]` return `0` with `in_bounds = false`.
#[inline]
pub fn bilinear_sample(image: &ImageRaster, p: Point, channel: usize) -> Sample {
    let (w, h) = (image.width(), image.height());
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    if !(p.x >= 0.0 && p.x <= max_x && p.y >= 0.0 && p.y <= max_y) {
        return Sample {
            value: 0.0,
            in_bounds: false,
        };
    }
    Sample {
        value: bilinear_inside(image, p.x, p.y, channel),
        in_bounds: true,
    }
}

/// Bilinear lookup for a point already known to lie inside the sample grid.
#[inline]
pub(crate) fn bilinear_inside(image: &ImageRaster, x: f64, y: f64, channel: usize) -> f64 {
    let (w, h) = (image.width(), image.height());
    let x0 = (x.floor() as usize).min(w.saturating_sub(2));
    let y0 = (y.floor() as usize).min(h.saturating_sub(2));
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let top = image.get(x0, y0, channel) * (1.0 - fx) + image.get(x1, y0, channel) * fx;
    let bottom = image.get(x0, y1, channel) * (1.0 - fx) + image.get(x1, y1, channel) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear lookup with coordinates clamped to the image (edge replication).
#[inline]
fn bilinear_clamped(image: &ImageRaster, x: f64, y: f64, channel: usize) -> f64 {
    let x = x.clamp(0.0, (image.width() - 1) as f64);
    let y = y.clamp(0.0, (image.height() - 1) as f64);
    bilinear_inside(image, x, y, channel)
}

/// Inverse-mapping warp: output pixel `x` takes the bilinear sample of
/// `image` at `S·x + b`. Unmapped pixels are left at zero.
pub fn warp_affine(
    image: &ImageRaster,
    transform: &AffineTransform,
    out_width: usize,
    out_height: usize,
) -> Result<ImageRaster> {
    let det = transform.det();
    if !(det > MIN_DET) {
        return Err(Error::SingularTransform { det });
    }
    let channels = image.channels();
    let mut data = vec![0.0; out_width * out_height * channels];
    let fill_row = |y: usize, row: &mut [f64]| {
        for x in 0..out_width {
            let p = transform.apply(Point::new(x as f64, y as f64));
            for c in 0..channels {
                row[x * channels + c] = bilinear_sample(image, p, c).value;
            }
        }
    };
    crate::par::for_each_row(&mut data, out_width * channels, fill_row);
    ImageRaster::new(out_width, out_height, channels, data)
}

fn catmull_rom(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t < 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

fn bicubic_clamped(image: &ImageRaster, x: f64, y: f64, channel: usize) -> f64 {
    let (w, h) = (image.width() as isize, image.height() as isize);
    let xf = x.floor();
    let yf = y.floor();
    let (ix, iy) = (xf as isize, yf as isize);
    let (fx, fy) = (x - xf, y - yf);
    let wx = [
        catmull_rom(1.0 + fx),
        catmull_rom(fx),
        catmull_rom(1.0 - fx),
        catmull_rom(2.0 - fx),
    ];
    let wy = [
        catmull_rom(1.0 + fy),
        catmull_rom(fy),
        catmull_rom(1.0 - fy),
        catmull_rom(2.0 - fy),
    ];
    let mut acc = 0.0;
    for (j, wyj) in wy.iter().enumerate() {
        let yy = (iy + j as isize - 1).clamp(0, h - 1) as usize;
        let mut row = 0.0;
        for (i, wxi) in wx.iter().enumerate() {
            let xx = (ix + i as isize - 1).clamp(0, w - 1) as usize;
            row += wxi * image.get(xx, yy, channel);
        }
        acc += wyj * row;
    }
    acc
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

fn convolve_axis(image: &ImageRaster, kernel: &[f64], horizontal: bool) -> ImageRaster {
    let (w, h, ch) = image.dims();
    let radius = (kernel.len() / 2) as isize;
    let mut data = vec![0.0; w * h * ch];
    let fill_row = |y: usize, row: &mut [f64]| {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let off = k as isize - radius;
                    let v = if horizontal {
                        let xx = (x as isize + off).clamp(0, w as isize - 1) as usize;
                        image.get(xx, y, c)
                    } else {
                        let yy = (y as isize + off).clamp(0, h as isize - 1) as usize;
                        image.get(x, yy, c)
                    };
                    acc += kv * v;
                }
                row[x * ch + c] = acc;
            }
        }
    };
    crate::par::for_each_row(&mut data, w * ch, fill_row);
    ImageRaster::new(w, h, ch, data).expect("convolution preserves shape")
}

/// Separable Gaussian blur with replicated borders. `sigma <= 0` is a no-op.
pub fn gaussian_blur(image: &ImageRaster, sigma: f64) -> ImageRaster {
    gaussian_blur_xy(image, sigma, sigma)
}

fn gaussian_blur_xy(image: &ImageRaster, sigma_x: f64, sigma_y: f64) -> ImageRaster {
    let mut out = image.clone();
    if sigma_x > 0.0 {
        out = convolve_axis(&out, &gaussian_kernel(sigma_x), true);
    }
    if sigma_y > 0.0 {
        out = convolve_axis(&out, &gaussian_kernel(sigma_y), false);
    }
    out
}

/// Scales `image` by `factor` in both axes. Output dimensions are
/// `round(dim × factor)`; output pixel `j` samples the input at
/// `(j + 0.5) / factor - 0.5`.
pub fn resample(image: &ImageRaster, factor: f64, method: Interpolation) -> Result<ImageRaster> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidFactor(factor));
    }
    let ow = (image.width() as f64 * factor).round();
    let oh = (image.height() as f64 * factor).round();
    if ow < 1.0 || oh < 1.0 {
        return Err(Error::InvalidFactor(factor));
    }
    resample_scaled(image, ow as usize, oh as usize, factor, factor, method)
}

/// Resamples to an explicit size; the per-axis factors are
/// `out_width / width` and `out_height / height`.
pub fn resample_to(
    image: &ImageRaster,
    out_width: usize,
    out_height: usize,
    method: Interpolation,
) -> Result<ImageRaster> {
    if out_width == 0 || out_height == 0 {
        return Err(Error::InvalidFactor(0.0));
    }
    let fx = out_width as f64 / image.width() as f64;
    let fy = out_height as f64 / image.height() as f64;
    resample_scaled(image, out_width, out_height, fx, fy, method)
}

fn resample_scaled(
    image: &ImageRaster,
    ow: usize,
    oh: usize,
    fx: f64,
    fy: f64,
    method: Interpolation,
) -> Result<ImageRaster> {
    if ow == image.width() && oh == image.height() && fx == 1.0 && fy == 1.0 {
        return Ok(image.clone());
    }
    // Anti-aliasing prefilter, only along axes that shrink.
    let sx = if fx < 1.0 { 0.5 / fx } else { 0.0 };
    let sy = if fy < 1.0 { 0.5 / fy } else { 0.0 };
    let src = gaussian_blur_xy(image, sx, sy);
    let ch = image.channels();
    let mut data = vec![0.0; ow * oh * ch];
    let fill_row = |j: usize, row: &mut [f64]| {
        let y = (j as f64 + 0.5) / fy - 0.5;
        for i in 0..ow {
            let x = (i as f64 + 0.5) / fx - 0.5;
            for c in 0..ch {
                row[i * ch + c] = match method {
                    Interpolation::Bilinear => bilinear_clamped(&src, x, y, c),
                    Interpolation::Bicubic => bicubic_clamped(&src, x, y, c),
                };
            }
        }
    };
    crate::par::for_each_row(&mut data, ow * ch, fill_row);
    ImageRaster::new(ow, oh, ch, data)
}
