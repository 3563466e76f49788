//! Display-frame layout (fiducial markers, periodic bar bands, content
//! window) and rendering of target and black frames.
//!
//! Layout geometry for a canvas `W × H` with strip width `margin`:
//!
//! ```text
//! +--------------------------------------------+
//! | [M]               [M]                  [M] |  marker strip (margin)
//! |     +----------- bar (horiz) --------+     |  bar ring (margin / 2)
//! |     | b |                        | b |     |
//! | [M] | a |       content          | a | [M] |
//! |     | r |                        | r |     |
//! |     +----------- bar (horiz) --------+     |
//! | [M]               [M]                  [M] |
//! +--------------------------------------------+
//! ```
//!
//! A gap of `margin / 4` separates the bar ring from the content window.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{resample, ImageRaster, Interpolation, Point, Rect};

pub const MARKER_COUNT: usize = 8;
pub const BAR_COUNT: usize = 4;

/// A solid white square marker. Pixel `(i, j)` belongs to the marker when
/// `|i - cx| < side / 2` and `|j - cy| < side / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerSpec {
    pub cx: f64,
    pub cy: f64,
    pub side: usize,
}

impl MarkerSpec {
    /// Marker whose pixel square starts at `(x0, y0)`.
    pub fn from_origin(x0: usize, y0: usize, side: usize) -> Self {
        let half = (side as f64 - 1.0) / 2.0;
        MarkerSpec {
            cx: x0 as f64 + half,
            cy: y0 as f64 + half,
            side,
        }
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    /// Covered pixel range as `(first, last)` inclusive along one axis, or
    /// `None` when it would start left of/above the origin.
    fn pixel_span(center: f64, side: usize) -> Option<(i64, i64)> {
        let half = side as f64 / 2.0;
        let first = (center - half).floor() as i64 + 1;
        let last = (center + half).ceil() as i64 - 1;
        (first >= 0 && last >= first).then_some((first, last))
    }

    /// Pixel rectangle covered by the marker.
    pub fn pixel_rect(&self) -> Option<Rect> {
        let (x0, x1) = Self::pixel_span(self.cx, self.side)?;
        let (y0, y1) = Self::pixel_span(self.cy, self.side)?;
        Some(Rect::new(
            x0 as usize,
            y0 as usize,
            (x1 - x0 + 1) as usize,
            (y1 - y0 + 1) as usize,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Stripes vary along `x`.
    Horizontal,
    /// Stripes vary along `y`.
    Vertical,
}

/// A periodic bar band of known frequency and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarSpec {
    pub rect: Rect,
    #[serde(rename = "orient")]
    pub orientation: Orientation,
    /// Cycles per pixel along the orientation axis.
    #[serde(rename = "freq")]
    pub frequency: f64,
    /// Designed phase in cycles, anchored at the band origin.
    pub phase: f64,
}

impl BarSpec {
    /// Along-axis coordinate of pixel `(x, y)` relative to the band origin.
    #[inline]
    pub fn along(&self, x: f64, y: f64) -> f64 {
        match self.orientation {
            Orientation::Horizontal => x - self.rect.x as f64,
            Orientation::Vertical => y - self.rect.y as f64,
        }
    }

    /// Ideal sinusoidal intensity `0.5 + 0.5·cos(2π(w·t − θ))`.
    #[inline]
    pub fn ideal_value(&self, x: f64, y: f64) -> f64 {
        0.5 + 0.5 * (TAU * (self.frequency * self.along(x, y) - self.phase)).cos()
    }

    /// Integer pixel coordinates covered by the band, row-major.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = self.rect;
        (r.y..r.bottom()).flat_map(move |y| (r.x..r.right()).map(move |x| (x, y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanvasSize {
    pub w: usize,
    pub h: usize,
}

/// Full display-frame design: 8 markers, 4 bar bands and the content
/// window, in digital-frame pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub canvas: CanvasSize,
    pub markers: Vec<MarkerSpec>,
    pub bars: Vec<BarSpec>,
    pub content: Rect,
}

/// Intensity profile of rendered bar bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BarProfile {
    /// Raised cosine; all AC energy at the design frequency.
    #[default]
    Sinusoid,
    /// Hard black/white bars (sign of the cosine).
    Square,
}

pub fn make_layout(
    canvas_w: usize,
    canvas_h: usize,
    marker_side: usize,
    bar_period: usize,
    margin: usize,
) -> Result<LayoutSpec> {
    let infeasible = |msg: String| Err(Error::InfeasibleLayout(msg));
    if marker_side == 0 || marker_side > margin {
        return infeasible(format!(
            "marker side {marker_side} must be in 1..={margin} (the margin)"
        ));
    }
    if bar_period <= 2 {
        return infeasible(format!(
            "bar period {bar_period} must exceed 2 pixels (Nyquist)"
        ));
    }
    let depth = margin / 2;
    let gap = margin / 4;
    if depth == 0 {
        return infeasible("margin too small for a bar band".into());
    }
    let inset = margin + depth + gap;
    if 2 * inset >= canvas_w || 2 * inset >= canvas_h {
        return infeasible(format!(
            "bands overlap: canvas {canvas_w}x{canvas_h} cannot hold two insets of {inset}"
        ));
    }
    let bar_len_x = canvas_w - 2 * (margin + depth);
    let bar_len_y = canvas_h - 2 * (margin + depth);
    if bar_len_x.min(bar_len_y) < 2 * bar_period {
        return infeasible(format!(
            "bar bands shorter than two periods of {bar_period}"
        ));
    }

    let off = (margin - marker_side) / 2;
    let right = canvas_w - off - marker_side;
    let bottom = canvas_h - off - marker_side;
    let mid_x = (canvas_w - marker_side) / 2;
    let mid_y = (canvas_h - marker_side) / 2;
    let markers = [
        (off, off),
        (right, off),
        (right, bottom),
        (off, bottom),
        (mid_x, off),
        (right, mid_y),
        (mid_x, bottom),
        (off, mid_y),
    ]
    .iter()
    .map(|&(x, y)| MarkerSpec::from_origin(x, y, marker_side))
    .collect();

    let frequency = 1.0 / bar_period as f64;
    let band = |rect, orientation| BarSpec {
        rect,
        orientation,
        frequency,
        phase: 0.0,
    };
    let bars = vec![
        band(
            Rect::new(margin + depth, margin, bar_len_x, depth),
            Orientation::Horizontal,
        ),
        band(
            Rect::new(canvas_w - margin - depth, margin + depth, depth, bar_len_y),
            Orientation::Vertical,
        ),
        band(
            Rect::new(margin + depth, canvas_h - margin - depth, bar_len_x, depth),
            Orientation::Horizontal,
        ),
        band(
            Rect::new(margin, margin + depth, depth, bar_len_y),
            Orientation::Vertical,
        ),
    ];
    let content = Rect::new(inset, inset, canvas_w - 2 * inset, canvas_h - 2 * inset);

    let layout = LayoutSpec {
        canvas: CanvasSize {
            w: canvas_w,
            h: canvas_h,
        },
        markers,
        bars,
        content,
    };
    layout.validate()?;
    Ok(layout)
}

impl LayoutSpec {
    pub fn canvas_rect(&self) -> Rect {
        Rect::new(0, 0, self.canvas.w, self.canvas.h)
    }

    /// Center of the canvas in continuous coordinates.
    pub fn canvas_center(&self) -> Point {
        self.canvas_rect().center()
    }

    /// Analytic marker centroids in digital-frame coordinates.
    pub fn anchor_points(&self) -> Vec<Point> {
        self.markers.iter().map(MarkerSpec::center).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InfeasibleLayout(msg));
        if self.markers.len() != MARKER_COUNT {
            return bad(format!("expected {MARKER_COUNT} markers, got {}", self.markers.len()));
        }
        if self.bars.len() != BAR_COUNT {
            return bad(format!("expected {BAR_COUNT} bars, got {}", self.bars.len()));
        }
        let canvas = self.canvas_rect();
        if canvas.is_empty() {
            return bad("empty canvas".into());
        }
        let mut marker_rects = Vec::with_capacity(MARKER_COUNT);
        for (k, m) in self.markers.iter().enumerate() {
            if !(m.cx.is_finite() && m.cy.is_finite()) {
                return bad(format!("marker {k} has a non-finite center"));
            }
            match m.pixel_rect() {
                Some(r) if canvas.contains_rect(&r) => marker_rects.push(r),
                _ => return bad(format!("marker {k} is not inside the canvas")),
            }
        }
        for i in 0..MARKER_COUNT {
            for j in i + 1..MARKER_COUNT {
                if marker_rects[i].intersects(&marker_rects[j]) {
                    return bad(format!("markers {i} and {j} overlap"));
                }
            }
        }
        let orientations = self
            .bars
            .iter()
            .filter(|b| b.orientation == Orientation::Horizontal)
            .count();
        if orientations != 2 {
            return bad("need two horizontal and two vertical bars".into());
        }
        for (m, bar) in self.bars.iter().enumerate() {
            if !(bar.frequency > 0.0 && bar.frequency < 0.5) {
                return bad(format!("bar {m} frequency {} not in (0, 0.5)", bar.frequency));
            }
            if !(bar.phase >= 0.0 && bar.phase < 1.0) {
                return bad(format!("bar {m} phase {} not in [0, 1)", bar.phase));
            }
            if bar.rect.is_empty() || !canvas.contains_rect(&bar.rect) {
                return bad(format!("bar {m} is not inside the canvas"));
            }
            if let Some(k) = marker_rects.iter().position(|r| r.intersects(&bar.rect)) {
                return bad(format!("bar {m} overlaps marker {k}"));
            }
            for (n, other) in self.bars.iter().enumerate().skip(m + 1) {
                if bar.rect.intersects(&other.rect) {
                    return bad(format!("bars {m} and {n} overlap"));
                }
            }
        }
        if self.content.is_empty() || !canvas.contains_rect(&self.content) {
            return bad("content window empty or outside the canvas".into());
        }
        if marker_rects.iter().any(|r| r.intersects(&self.content))
            || self.bars.iter().any(|b| b.rect.intersects(&self.content))
        {
            return bad("content window overlaps markers or bars".into());
        }
        Ok(())
    }

    /// Parses and validates a layout JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let layout: LayoutSpec = serde_json::from_str(text)?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Whether pixel `(x, y)` lies in any marker square.
    pub fn is_marker_pixel(&self, x: usize, y: usize) -> bool {
        self.markers
            .iter()
            .filter_map(MarkerSpec::pixel_rect)
            .any(|r| r.contains_pixel(x, y))
    }

    /// Whether pixel `(x, y)` lies in any bar band.
    pub fn is_bar_pixel(&self, x: usize, y: usize) -> bool {
        self.bars.iter().any(|b| b.rect.contains_pixel(x, y))
    }
}

/// Fits `digital` into the content window: copied as-is when sizes match,
/// otherwise bicubic-resampled by the largest factor that fits and centered.
pub fn fit_content(digital: &ImageRaster, content: Rect) -> Result<(ImageRaster, usize, usize)> {
    if digital.width() == content.w && digital.height() == content.h {
        return Ok((digital.clone(), content.x, content.y));
    }
    let factor = (content.w as f64 / digital.width() as f64)
        .min(content.h as f64 / digital.height() as f64);
    let mut fitted = resample(digital, factor, Interpolation::Bicubic)?;
    if fitted.width() > content.w || fitted.height() > content.h {
        let w = fitted.width().min(content.w);
        let h = fitted.height().min(content.h);
        fitted = fitted.crop(Rect::new(0, 0, w, h))?;
    }
    let x = content.x + (content.w - fitted.width()) / 2;
    let y = content.y + (content.h - fitted.height()) / 2;
    Ok((fitted, x, y))
}

pub fn render_target(digital: &ImageRaster, layout: &LayoutSpec) -> Result<ImageRaster> {
    render_target_with(digital, layout, BarProfile::Sinusoid)
}

pub fn render_target_with(
    digital: &ImageRaster,
    layout: &LayoutSpec,
    profile: BarProfile,
) -> Result<ImageRaster> {
    layout.validate()?;
    let ch = digital.channels();
    let mut frame = ImageRaster::zeros(layout.canvas.w, layout.canvas.h, ch)?;
    for bar in &layout.bars {
        for (x, y) in bar.pixels() {
            let v = bar.ideal_value(x as f64, y as f64);
            let v = match profile {
                BarProfile::Sinusoid => v,
                BarProfile::Square if v >= 0.5 => 1.0,
                BarProfile::Square => 0.0,
            };
            for c in 0..ch {
                frame.set(x, y, c, v);
            }
        }
    }
    for rect in layout.markers.iter().filter_map(MarkerSpec::pixel_rect) {
        for y in rect.y..rect.bottom() {
            for x in rect.x..rect.right() {
                for c in 0..ch {
                    frame.set(x, y, c, 1.0);
                }
            }
        }
    }
    let (fitted, x, y) = fit_content(digital, layout.content)?;
    frame.paste(&fitted, x, y)?;
    Ok(frame)
}

/// All-black grayscale frame at canvas size.
pub fn render_black(layout: &LayoutSpec) -> Result<ImageRaster> {
    ImageRaster::zeros(layout.canvas.w, layout.canvas.h, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn uhd() -> LayoutSpec {
        make_layout(3840, 2160, 64, 16, 96).unwrap()
    }

    #[test]
    fn uhd_layout_is_valid() {
        let l = uhd();
        assert_eq!(l.markers.len(), 8);
        assert_eq!(l.bars.len(), 4);
        let c = l.content;
        assert!(c.x > 0 && c.y > 0 && c.right() < 3840 && c.bottom() < 2160);
        // corner markers are at the corners, side markers at side centers
        assert_eq!(l.markers[0].center(), Point::new(47.5, 47.5));
        assert_eq!(l.markers[4].cx, 1919.5);
        assert_eq!(l.markers[7].cy, 1079.5);
        for m in &l.markers {
            assert_eq!(m.pixel_rect().unwrap().area(), 64 * 64);
        }
    }

    #[test]
    fn small_canvas_is_infeasible() {
        match make_layout(100, 100, 32, 16, 60) {
            Err(Error::InfeasibleLayout(msg)) => assert!(msg.contains("overlap"), "{msg}"),
            other => panic!("expected infeasible layout, got {other:?}"),
        }
        assert!(make_layout(1024, 1024, 100, 16, 96).is_err());
        assert!(make_layout(1024, 1024, 64, 2, 96).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut l = uhd();
        l.bars[2].phase = 0.123_456_789_012_345_68;
        l.bars[1].frequency = 1.0 / 17.0;
        let text = l.to_json();
        let back = LayoutSpec::from_json(&text).unwrap();
        assert_eq!(back, l);
        assert_eq!(back.to_json(), text);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["canvas"]["w"].is_u64());
        assert!(v["markers"][0]["cx"].is_f64());
        assert_eq!(v["bars"][0]["orient"], "horizontal");
        assert!(v["bars"][0]["rect"]["h"].is_u64());
        assert!(v["content"]["x"].is_u64());
    }

    #[test]
    fn rejects_invalid_json_layouts() {
        let mut l = uhd();
        l.markers.pop();
        assert!(LayoutSpec::from_json(&serde_json::to_string(&l).unwrap()).is_err());
        let mut l = uhd();
        l.bars[0].frequency = 0.6;
        assert!(l.validate().is_err());
        let mut l = uhd();
        l.content = Rect::new(0, 0, 200, 200);
        assert!(l.validate().is_err());
    }

    #[test]
    fn zero_digital_frame() {
        let l = make_layout(512, 384, 32, 16, 64).unwrap();
        let digital = ImageRaster::zeros(l.content.w, l.content.h, 1).unwrap();
        let frame = render_target(&digital, &l).unwrap();
        for y in 0..384 {
            for x in 0..512 {
                let v = frame.get(x, y, 0);
                if l.is_marker_pixel(x, y) {
                    assert_eq!(v, 1.0);
                } else if !l.is_bar_pixel(x, y) {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn bar_extrema() {
        let l = make_layout(512, 384, 32, 16, 64).unwrap();
        let frame = render_target(&ImageRaster::zeros(10, 10, 1).unwrap(), &l).unwrap();
        for bar in &l.bars {
            let (x0, y0) = (bar.rect.x, bar.rect.y);
            assert_eq!(frame.get(x0, y0, 0), 1.0);
            let (xh, yh) = match bar.orientation {
                Orientation::Horizontal => (x0 + 8, y0),
                Orientation::Vertical => (x0, y0 + 8),
            };
            assert!(frame.get(xh, yh, 0).abs() < 1e-15);
        }
    }

    #[test]
    fn only_markers_reach_one_outside_content() {
        let l = make_layout(512, 384, 32, 16, 64).unwrap();
        let digital = ImageRaster::filled(l.content.w, l.content.h, 3, 1.0).unwrap();
        let frame = render_target(&digital, &l).unwrap();
        for y in 0..384 {
            for x in 0..512 {
                if l.content.contains_pixel(x, y) {
                    continue;
                }
                let one = frame.get(x, y, 0) == 1.0;
                let bar_peak = l.bars.iter().any(|b| {
                    b.rect.contains_pixel(x, y)
                        && (b.frequency * b.along(x as f64, y as f64)).fract() == 0.0
                });
                // bar crests touch 1.0 exactly at integer periods; everything else is a marker
                assert_eq!(one, l.is_marker_pixel(x, y) || bar_peak, "({x},{y})");
            }
        }
    }

    #[test]
    fn content_copied_exactly() {
        let l = make_layout(512, 384, 32, 16, 64).unwrap();
        let digital =
            ImageRaster::from_fn(l.content.w, l.content.h, 3, |x, y, c| ((x * 3 + y + c) % 17) as f64 / 16.0).unwrap();
        let frame = render_target(&digital, &l).unwrap();
        assert_eq!(frame.crop(l.content).unwrap(), digital);
    }

    #[test]
    fn mismatched_content_is_fitted() {
        let l = make_layout(512, 384, 32, 16, 64).unwrap();
        let digital = ImageRaster::filled(100, 50, 1, 0.25).unwrap();
        let frame = render_target(&digital, &l).unwrap();
        let c = l.content.center();
        assert!((frame.get(c.x as usize, c.y as usize, 0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn black_frame() {
        let l = uhd();
        let black = render_black(&l).unwrap();
        assert_eq!((black.width(), black.height()), (3840, 2160));
        assert_eq!(black.sum(), 0.0);
        let frame = render_target(&ImageRaster::filled(5, 5, 1, 0.3).unwrap(), &l).unwrap();
        let diff = frame.zip_map(&black, |a, b| a - b).unwrap();
        assert_eq!(diff, frame);
    }

    /// Brute-force DFT of a 1D profile.
    fn dft(signal: &[f64], k: usize) -> Complex64 {
        let n = signal.len() as f64;
        signal
            .iter()
            .enumerate()
            .map(|(t, v)| v * Complex64::from_polar(1.0, -TAU * (k * t) as f64 / n))
            .sum()
    }

    #[test]
    fn bar_energy_concentrated_at_design_bin() {
        let l = make_layout(1024, 1024, 64, 16, 96).unwrap();
        let frame = render_target(&ImageRaster::zeros(8, 8, 1).unwrap(), &l).unwrap();
        for bar in &l.bars {
            // whole number of periods so the design frequency is a DFT bin
            let len = match bar.orientation {
                Orientation::Horizontal => bar.rect.w,
                Orientation::Vertical => bar.rect.h,
            };
            let n = len - len % 16;
            let profile: Vec<f64> = (0..n)
                .map(|t| match bar.orientation {
                    Orientation::Horizontal => frame.get(bar.rect.x + t, bar.rect.y + 3, 0),
                    Orientation::Vertical => frame.get(bar.rect.x + 3, bar.rect.y + t, 0),
                })
                .collect();
            let design_bin = n / 16;
            let energies: Vec<f64> = (1..n / 2 + 1).map(|k| dft(&profile, k).norm_sqr()).collect();
            let total: f64 = energies.iter().sum();
            assert!(energies[design_bin - 1] / total > 0.99);
        }
    }
}
