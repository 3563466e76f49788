use super::ImageRaster;
use crate::error::{Error, Result};

/// Per-channel central-difference gradient with replicated borders.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    channels: usize,
    /// `[∂x, ∂y]` per (pixel, channel), row-major and channel-interleaved.
    data: Vec<[f64; 2]>,
}

impl GradientField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> [f64; 2] {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// All gradient components, `∂x` and `∂y` interleaved.
    pub fn components(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().flat_map(|g| g.iter().copied())
    }
}

/// `∂x(x, y) = (I(x+1, y) - I(x-1, y)) / 2` with clamped indices, and the
/// same along `y`.
pub fn image_gradient(image: &ImageRaster) -> Result<GradientField> {
    let (w, h, ch) = image.dims();
    if w < 2 || h < 2 {
        return Err(Error::InvalidRaster(format!(
            "gradient needs at least 2x2 pixels, got {w}x{h}"
        )));
    }
    let mut data = Vec::with_capacity(w * h * ch);
    for y in 0..h {
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            for c in 0..ch {
                let dx = (image.get(xr, y, c) - image.get(xl, y, c)) / 2.0;
                let dy = (image.get(x, yd, c) - image.get(x, yu, c)) / 2.0;
                data.push([dx, dy]);
            }
        }
    }
    Ok(GradientField {
        width: w,
        height: h,
        channels: ch,
        data,
    })
}
