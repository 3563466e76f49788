//! Pixel container, geometry primitives and the resampling machinery shared
//! by every other module.
//!
//! Coordinate convention: pixel centers sit at integer coordinates with the
//! origin at the center of the top-left pixel. `x` grows to the right and
//! `y` grows downwards. A pixel at column `i` covers `[i - 0.5, i + 0.5)`.

mod gradient;
mod interp;
pub mod io;
mod transform;

pub use gradient::{image_gradient, GradientField};
pub use interp::{
    bilinear_sample, gaussian_blur, resample, resample_to, warp_affine, Interpolation, Sample,
};
pub use transform::AffineTransform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A continuous sub-pixel location.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned pixel rectangle `[x, x + w) × [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn contains_pixel(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.right()
            && other.x < self.right()
            && self.y < other.bottom()
            && other.y < self.bottom()
    }

    /// Center in continuous pixel coordinates.
    pub fn center(&self) -> Point {
        Point::new(
            self.x as f64 + (self.w as f64 - 1.0) / 2.0,
            self.y as f64 + (self.h as f64 - 1.0) / 2.0,
        )
    }
}

/// Row-major, channel-interleaved grid of linear intensities.
///
/// Values are nominally in `[0, 1]` but are never clamped during
/// computation; clamping happens only when exporting.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRaster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageRaster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidRaster(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "empty raster {width}x{height}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidRaster(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRaster(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(ImageRaster {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, 0.0)
    }

    /// Builds a raster by evaluating `f(x, y, channel)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.index(x, y, c);
        self.data[i] = value;
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    pub fn ensure_same_dims(&self, other: &ImageRaster) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    /// Channel mean; returns `self` unchanged (cloned) for grayscale input.
    pub fn to_gray(&self) -> ImageRaster {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() / self.channels as f64)
            .collect();
        ImageRaster {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Replicates a grayscale raster into `channels` channels.
    pub fn with_channels(&self, channels: usize) -> Result<ImageRaster> {
        match (self.channels, channels) {
            (a, b) if a == b => Ok(self.clone()),
            (1, 3) => Ok(ImageRaster {
                width: self.width,
                height: self.height,
                channels: 3,
                data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
            }),
            (3, 1) => Ok(self.to_gray()),
            (_, c) => Err(Error::InvalidRaster(format!("unsupported channel count {c}"))),
        }
    }

    pub fn crop(&self, rect: Rect) -> Result<ImageRaster> {
        if rect.is_empty() || !self.bounds().contains_rect(&rect) {
            return Err(Error::InvalidRaster(format!(
                "crop {rect:?} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(rect.area() * self.channels);
        for y in rect.y..rect.bottom() {
            let start = self.index(rect.x, y, 0);
            data.extend_from_slice(&self.data[start..start + rect.w * self.channels]);
        }
        Ok(ImageRaster {
            width: rect.w,
            height: rect.h,
            channels: self.channels,
            data,
        })
    }

    /// Copies `src` into `self` with its top-left corner at `(x, y)`.
    pub fn paste(&mut self, src: &ImageRaster, x: usize, y: usize) -> Result<()> {
        if src.channels != self.channels {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: src.dims(),
            });
        }
        let target = Rect::new(x, y, src.width, src.height);
        if !self.bounds().contains_rect(&target) {
            return Err(Error::InvalidRaster(format!(
                "paste target {target:?} outside {}x{}",
                self.width, self.height
            )));
        }
        let row = src.width * self.channels;
        for sy in 0..src.height {
            let dst = self.index(x, y + sy, 0);
            let from = sy * row;
            self.data[dst..dst + row].copy_from_slice(&src.data[from..from + row]);
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ImageRaster {
        ImageRaster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixelwise `f(self, other)` over two rasters of equal dimensions.
    pub fn zip_map(&self, other: &ImageRaster, f: impl Fn(f64, f64) -> f64) -> Result<ImageRaster> {
        self.ensure_same_dims(other)?;
        Ok(ImageRaster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &ImageRaster) -> Result<f64> {
        self.ensure_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Copy with every value clamped into `[0, 1]`, as used at export time.
    pub fn clamped(&self) -> ImageRaster {
        self.map(|v| v.clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(ImageRaster::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageRaster::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageRaster::new(0, 2, 1, vec![]).is_err());
        assert!(ImageRaster::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn crop_and_paste_are_inverse() {
        let img = ImageRaster::from_fn(6, 5, 3, |x, y, c| (x * 100 + y * 10 + c) as f64).unwrap();
        let rect = Rect::new(1, 2, 3, 2);
        let piece = img.crop(rect).unwrap();
        assert_eq!(piece.get(0, 0, 2), img.get(1, 2, 2));
        let mut blank = ImageRaster::zeros(6, 5, 3).unwrap();
        blank.paste(&piece, 1, 2).unwrap();
        for y in 0..5 {
            for x in 0..6 {
                let want = if rect.contains_pixel(x, y) { img.get(x, y, 1) } else { 0.0 };
                assert_eq!(blank.get(x, y, 1), want);
            }
        }
        assert!(img.crop(Rect::new(4, 0, 3, 1)).is_err());
    }

    #[test]
    fn rect_relations() {
        let a = Rect::new(0, 0, 10, 10);
        let b = Rect::new(9, 9, 2, 2);
        let c = Rect::new(10, 0, 2, 2);
        assert!(a.intersects(&b));
        assert!(!a.intersects(&c));
        assert!(!a.contains_rect(&b));
        assert_eq!(Rect::new(2, 4, 5, 4).center(), Point::new(4.0, 5.5));
    }

    #[test]
    fn gray_conversion_averages_channels() {
        let img = ImageRaster::new(1, 1, 3, vec![0.0, 0.3, 0.6]).unwrap();
        assert!((img.to_gray().get(0, 0, 0) - 0.3).abs() < 1e-15);
    }
}
