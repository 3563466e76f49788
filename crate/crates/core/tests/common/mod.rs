#![allow(dead_code)]

use drti::pattern::{make_layout, LayoutSpec};
use drti::sim::CaptureGroundTruth;
use drti::{AffineTransform, ImageRaster, Point};

/// 512² frame with 48 px markers, 16 px bar period and a 72 px margin.
pub fn small_layout() -> LayoutSpec {
    make_layout(512, 512, 48, 16, 72).unwrap()
}

/// Smooth content: two slow sinusoids over a gradient.
pub fn smooth_content(w: usize, h: usize, channels: usize) -> ImageRaster {
    ImageRaster::from_fn(w, h, channels, |x, y, c| {
        let (x, y) = (x as f64, y as f64);
        0.35 + 0.15 * x / w as f64
            + 0.1 * (x / 37.0 + 0.4 * c as f64).sin() * (y / 53.0).cos()
            + 0.05 * ((x + y) / 61.0).sin()
    })
    .unwrap()
}

pub fn canvas_center(layout: &LayoutSpec) -> Point {
    Point::new((layout.canvas.w as f64 - 1.0) / 2.0, (layout.canvas.h as f64 - 1.0) / 2.0)
}

/// Noise-free ground truth: a similarity about the canvas center followed
/// by `downscale`.
pub fn clean_truth(layout: &LayoutSpec, scale: f64, angle: f64, shift: [f64; 2], downscale: f64) -> CaptureGroundTruth {
    CaptureGroundTruth {
        transform: AffineTransform::similarity_about(scale, angle, canvas_center(layout), shift).unwrap(),
        psf_sigma: 0.0,
        noise_sigma: 0.0,
        backlight: 0.0,
        downscale,
        seed: 0,
    }
}
