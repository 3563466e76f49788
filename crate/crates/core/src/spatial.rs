//! Marker segmentation, intensity-weighted centroids and the closed-form
//! least-squares affine fit between measured and designed anchors.

use nalgebra::{Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{LayoutSpec, MARKER_COUNT};
use crate::raster::{AffineTransform, ImageRaster, Point, Rect};

/// Condition number of `AA'` above which the anchors are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Fraction of the window's dynamic range below which pixels are zeroed.
pub const NOISE_GATE: f64 = 0.25;

/// Background-subtracted, noise-gated intensity patch around one marker.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSegment {
    pub index: usize,
    /// Window in captured-frame pixels.
    pub window: Rect,
    /// Gated weights `A_k(x, y)`, row-major over `window`.
    pub pixels: Vec<f64>,
    pub local_background: f64,
}

impl MarkerSegment {
    /// `|A_k|`, the total weight.
    pub fn mass(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }

    /// Same segment with every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> MarkerSegment {
        MarkerSegment {
            pixels: self.pixels.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Same weights, window moved by `(dx, dy)` pixels.
    pub fn shifted(&self, dx: usize, dy: usize) -> MarkerSegment {
        MarkerSegment {
            window: Rect::new(self.window.x + dx, self.window.y + dy, self.window.w, self.window.h),
            ..self.clone()
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Window of `nominal` scaled by `expansion` about its center.
fn expand_window(nominal: Rect, expansion: f64) -> (i64, i64, usize, usize) {
    let w = ((nominal.w as f64 * expansion).round() as usize).max(3);
    let h = ((nominal.h as f64 * expansion).round() as usize).max(3);
    let c = nominal.center();
    let x0 = (c.x - (w as f64 - 1.0) / 2.0).round() as i64;
    let y0 = (c.y - (h as f64 - 1.0) / 2.0).round() as i64;
    (x0, y0, w, h)
}

/// Copies the expanded window out of `captured` (channel mean for colour
/// input), subtracts the median of its border ring and zeroes everything
/// below `background + 0.25·(max − background)`.
pub fn extract_marker_segment(
    captured: &ImageRaster,
    nominal_window: Rect,
    expansion: f64,
    index: usize,
) -> Result<MarkerSegment> {
    let not_found = |reason: String| Error::MarkerNotFound { index, reason };
    if !(expansion >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "window expansion {expansion} must be >= 1"
        )));
    }
    let (x0, y0, w, h) = expand_window(nominal_window, expansion);
    if x0 < 0
        || y0 < 0
        || x0 as usize + w > captured.width()
        || y0 as usize + h > captured.height()
    {
        return Err(not_found(format!(
            "search window ({x0}, {y0}, {w}x{h}) leaves the {}x{} image",
            captured.width(),
            captured.height()
        )));
    }
    let window = Rect::new(x0 as usize, y0 as usize, w, h);
    let ch = captured.channels();
    let mut pixels = Vec::with_capacity(w * h);
    for y in window.y..window.bottom() {
        for x in window.x..window.right() {
            let v = (0..ch).map(|c| captured.get(x, y, c)).sum::<f64>() / ch as f64;
            pixels.push(v);
        }
    }
    let mut ring: Vec<f64> = (0..w * h)
        .filter(|i| {
            let (x, y) = (i % w, i / w);
            x == 0 || y == 0 || x == w - 1 || y == h - 1
        })
        .map(|i| pixels[i])
        .collect();
    let background = median(&mut ring);
    let peak = pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gate = background + NOISE_GATE * (peak - background);
    for v in pixels.iter_mut() {
        *v = if *v >= gate && *v > background {
            *v - background
        } else {
            0.0
        };
    }
    let segment = MarkerSegment {
        index,
        window,
        pixels,
        local_background: background,
    };
    if !(segment.mass() > 0.0) || peak - background <= 0.0 {
        return Err(not_found("no signal above the noise gate".into()));
    }
    Ok(segment)
}

/// Intensity-weighted centroid `(Σ x·A / |A|, Σ y·A / |A|)` in
/// captured-frame coordinates.
pub fn centroid(segment: &MarkerSegment) -> Result<Point> {
    let mass = segment.mass();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let w = segment.window.w;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (i, a) in segment.pixels.iter().enumerate() {
        sx += (i % w) as f64 * a;
        sy += (i / w) as f64 * a;
    }
    Ok(Point::new(
        segment.window.x as f64 + sx / mass,
        segment.window.y as f64 + sy / mass,
    ))
}

/// Corresponding anchors: measured centroids (sources) and the analytic
/// layout marker centers (destinations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    sources: Vec<Point>,
    destinations: Vec<Point>,
}

impl AnchorSet {
    pub fn new(sources: Vec<Point>, destinations: Vec<Point>) -> Result<Self> {
        if sources.len() != MARKER_COUNT || destinations.len() != MARKER_COUNT {
            return Err(Error::InvalidParameter(format!(
                "anchor set needs {MARKER_COUNT} correspondences, got {} and {}",
                sources.len(),
                destinations.len()
            )));
        }
        Ok(AnchorSet {
            sources,
            destinations,
        })
    }

    /// Destinations taken from the layout's marker centers.
    pub fn from_layout(sources: Vec<Point>, layout: &LayoutSpec) -> Result<Self> {
        Self::new(sources, layout.anchor_points())
    }

    pub fn sources(&self) -> &[Point] {
        &self.sources
    }

    pub fn destinations(&self) -> &[Point] {
        &self.destinations
    }

    /// Mean squared residual `Σ |M(src_k) − dst_k|² / n` of a
    /// source → destination map.
    pub fn mean_sq_residual(&self, map: &AffineTransform) -> f64 {
        mean_sq_residual(&self.sources, &self.destinations, map)
    }
}

pub(crate) fn mean_sq_residual(src: &[Point], dst: &[Point], map: &AffineTransform) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(s, d)| {
            let m = map.apply(*s);
            (m.x - d.x).powi(2) + (m.y - d.y).powi(2)
        })
        .sum::<f64>()
        / src.len() as f64
}

/// Closed-form fit and its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    /// Source → destination map (captured → digital for marker anchors).
    pub transform: AffineTransform,
    /// Mean squared anchor residual, in destination pixels².
    pub f1: f64,
    /// Condition number of `AA'`.
    pub condition: f64,
    /// Per-anchor residual distance after the fit.
    pub residuals: Vec<f64>,
}

/// Minimizer of `‖[S b; 0 1]·A − B‖_F` over `n ≥ 3` correspondences, i.e.
/// `[S b] = B·A'·(A·A')⁻¹` with homogeneous source columns in `A`.
///
/// The normal equations are solved in mean-centered coordinates, which is
/// algebraically identical and better conditioned.
pub fn fit_affine(src: &[Point], dst: &[Point]) -> Result<AffineFit> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 paired points, got {} and {}",
            n,
            dst.len()
        )));
    }
    let mut aat = Matrix3::<f64>::zeros();
    for p in src {
        let a = nalgebra::Vector3::new(p.x, p.y, 1.0);
        aat += a * a.transpose();
    }
    let eig = aat.symmetric_eigen().eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e.abs()), hi.max(e.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::DegenerateAnchors(condition));
    }

    let inv_n = 1.0 / n as f64;
    let ms = src.iter().fold(Vector2::zeros(), |acc, p| acc + Vector2::new(p.x, p.y)) * inv_n;
    let md = dst.iter().fold(Vector2::zeros(), |acc, p| acc + Vector2::new(p.x, p.y)) * inv_n;
    let mut cov_ss = Matrix2::<f64>::zeros();
    let mut cov_ds = Matrix2::<f64>::zeros();
    for (s, d) in src.iter().zip(dst) {
        let sc = Vector2::new(s.x, s.y) - ms;
        let dc = Vector2::new(d.x, d.y) - md;
        cov_ss += sc * sc.transpose();
        cov_ds += dc * sc.transpose();
    }
    let inv = cov_ss
        .try_inverse()
        .ok_or(Error::DegenerateAnchors(f64::INFINITY))?;
    let s = cov_ds * inv;
    let b = md - s * ms;
    let transform = AffineTransform::new([[s[(0, 0)], s[(0, 1)]], [s[(1, 0)], s[(1, 1)]]], [b[0], b[1]])?;
    let residuals = src
        .iter()
        .zip(dst)
        .map(|(p, d)| transform.apply(*p).distance(d))
        .collect();
    Ok(AffineFit {
        transform,
        f1: mean_sq_residual(src, dst, &transform),
        condition,
        residuals,
    })
}

pub fn solve_affine_ls(anchors: &AnchorSet) -> Result<AffineFit> {
    fit_affine(&anchors.sources, &anchors.destinations)
}

/// Center of the `side × side` box with the largest intensity sum among
/// centers within `radius` of `predicted` (summed-area table search).
pub fn locate_marker(
    gray: &ImageRaster,
    predicted: Point,
    side: usize,
    radius: f64,
    index: usize,
) -> Result<Point> {
    let (w, h) = (gray.width(), gray.height());
    let side = side.max(1);
    if side > w || side > h {
        return Err(Error::MarkerNotFound {
            index,
            reason: format!("marker box {side} larger than image"),
        });
    }
    let stride = w + 1;
    let mut table = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += gray.get(x, y, 0);
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
        }
    }
    let box_sum = |x0: usize, y0: usize| {
        table[(y0 + side) * stride + x0 + side] - table[y0 * stride + x0 + side]
            - table[(y0 + side) * stride + x0]
            + table[y0 * stride + x0]
    };
    let half = (side as f64 - 1.0) / 2.0;
    let lo_x = ((predicted.x - radius - half).floor().max(0.0)) as usize;
    let lo_y = ((predicted.y - radius - half).floor().max(0.0)) as usize;
    let hi_x = ((predicted.x + radius - half).ceil().max(0.0) as usize).min(w - side);
    let hi_y = ((predicted.y + radius - half).ceil().max(0.0) as usize).min(h - side);
    let mut best: Option<(f64, usize, usize)> = None;
    for y0 in lo_y..=hi_y.max(lo_y) {
        for x0 in lo_x..=hi_x.max(lo_x) {
            if x0 + side > w || y0 + side > h {
                continue;
            }
            let s = box_sum(x0, y0);
            if best.is_none_or(|(b, _, _)| s > b) {
                best = Some((s, x0, y0));
            }
        }
    }
    match best {
        Some((s, x0, y0)) if s > 0.0 => Ok(Point::new(x0 as f64 + half, y0 as f64 + half)),
        _ => Err(Error::MarkerNotFound {
            index,
            reason: "no bright box near the predicted position".into(),
        }),
    }
}

/// Coarse digital → captured guess from the bounding box of bright pixels,
/// which is spanned by the outer edges of the corner markers.
pub fn coarse_frame_guess(gray: &ImageRaster, layout: &LayoutSpec) -> Result<AffineTransform> {
    let (w, h) = (gray.width(), gray.height());
    let peak = gray.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = {
        let mut v: Vec<f64> = gray.data().to_vec();
        median(&mut v)
    };
    let threshold = floor + 0.5 * (peak - floor);
    // Rows/columns count as bright only with at least three bright pixels,
    // so isolated hot pixels do not stretch the box.
    let mut row_hits = vec![0usize; h];
    let mut col_hits = vec![0usize; w];
    for y in 0..h {
        for x in 0..w {
            if gray.get(x, y, 0) > threshold {
                row_hits[y] += 1;
                col_hits[x] += 1;
            }
        }
    }
    let span = |hits: &[usize]| {
        let first = hits.iter().position(|&n| n >= 3)?;
        let last = hits.iter().rposition(|&n| n >= 3)?;
        Some((first as f64, last as f64))
    };
    let (Some((x0, x1)), Some((y0, y1))) = (span(&col_hits), span(&row_hits)) else {
        return Err(Error::MarkerNotFound {
            index: 0,
            reason: "no bright structure in the captured frame".into(),
        });
    };
    let rects: Vec<Rect> = layout.markers.iter().filter_map(|m| m.pixel_rect()).collect();
    let dx0 = rects.iter().map(|r| r.x).min().unwrap_or(0) as f64;
    let dy0 = rects.iter().map(|r| r.y).min().unwrap_or(0) as f64;
    let dx1 = rects.iter().map(|r| r.right() - 1).max().unwrap_or(layout.canvas.w - 1) as f64;
    let dy1 = rects.iter().map(|r| r.bottom() - 1).max().unwrap_or(layout.canvas.h - 1) as f64;
    let sx = (x1 - x0).max(1.0) / (dx1 - dx0).max(1.0);
    let sy = (y1 - y0).max(1.0) / (dy1 - dy0).max(1.0);
    AffineTransform::new([[sx, 0.0], [0.0, sy]], [x0 - sx * dx0, y0 - sy * dy0])
}

/// Tuning of the marker search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialOptions {
    /// Window expansion factor around the marker square.
    pub expansion: f64,
    /// Search radius for the coarse box search, as a fraction of the
    /// layout margin (distance from canvas edge to the bar ring).
    pub search_fraction: f64,
    /// Re-centering passes of the segmentation window.
    pub passes: usize,
}

impl Default for SpatialOptions {
    fn default() -> Self {
        SpatialOptions {
            expansion: 1.5,
            search_fraction: 0.5,
            passes: 2,
        }
    }
}

/// Output of the centroid stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialDiagnostics {
    pub centroids: Vec<Point>,
    pub marker_residuals: Vec<f64>,
    pub f1: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFit {
    pub anchors: AnchorSet,
    /// Captured → digital closed-form fit.
    pub fit: AffineFit,
}

impl SpatialFit {
    /// The fitted alignment expressed as digital → captured.
    pub fn digital_to_captured(&self) -> AffineTransform {
        self.fit.transform.inverse()
    }

    pub fn diagnostics(&self) -> SpatialDiagnostics {
        SpatialDiagnostics {
            centroids: self.anchors.sources().to_vec(),
            marker_residuals: self.fit.residuals.clone(),
            f1: self.fit.f1,
            condition: self.fit.condition,
        }
    }
}

fn marker_centroid(
    gray: &ImageRaster,
    layout: &LayoutSpec,
    coarse: &AffineTransform,
    opts: &SpatialOptions,
    k: usize,
) -> Result<Point> {
    let marker = layout.markers[k];
    let scale = coarse.scale();
    let side = ((marker.side as f64 * scale).round() as usize).max(1);
    let margin = layout
        .bars
        .iter()
        .map(|b| b.rect.x.min(b.rect.y))
        .min()
        .unwrap_or(marker.side) as f64;
    let radius = opts.search_fraction * margin * scale;
    let mut center = locate_marker(gray, coarse.apply(marker.center()), side, radius, k)?;
    let mut point = center;
    for _ in 0..opts.passes.max(1) {
        let half = (side as f64 - 1.0) / 2.0;
        let x0 = (center.x - half).round();
        let y0 = (center.y - half).round();
        if x0 < 0.0 || y0 < 0.0 {
            return Err(Error::MarkerNotFound {
                index: k,
                reason: "marker touches the image border".into(),
            });
        }
        let nominal = Rect::new(x0 as usize, y0 as usize, side, side);
        let segment = extract_marker_segment(gray, nominal, opts.expansion, k)?;
        point = centroid(&segment)?;
        center = point;
    }
    Ok(point)
}

/// Locates all eight markers, measures their centroids and fits the
/// captured → digital closed-form transform.
pub fn spatial_register(
    captured: &ImageRaster,
    layout: &LayoutSpec,
    coarse: Option<&AffineTransform>,
    opts: &SpatialOptions,
) -> Result<SpatialFit> {
    let gray = captured.to_gray();
    let coarse = match coarse {
        Some(t) => *t,
        None => coarse_frame_guess(&gray, layout)?,
    };
    let centroids = crate::par::map_indexed(MARKER_COUNT, |k| {
        marker_centroid(&gray, layout, &coarse, opts, k)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let anchors = AnchorSet::from_layout(centroids, layout)?;
    let fit = solve_affine_ls(&anchors)?;
    Ok(SpatialFit { anchors, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn square_image(w: usize, h: usize, rect: Rect, value: f64) -> ImageRaster {
        ImageRaster::from_fn(w, h, 1, |x, y, _| if rect.contains_pixel(x, y) { value } else { 0.0 }).unwrap()
    }

    #[test]
    fn clean_marker_segment() {
        let img = square_image(64, 64, Rect::new(20, 24, 15, 15), 0.8);
        let seg = extract_marker_segment(&img, Rect::new(20, 24, 15, 15), 1.5, 3).unwrap();
        assert_eq!(seg.max(), 0.8);
        assert_eq!(seg.local_background, 0.0);
        let c = centroid(&seg).unwrap();
        assert!(c.distance(&Point::new(27.0, 31.0)) < 1e-12);
    }

    #[test]
    fn black_window_is_not_found() {
        let img = ImageRaster::zeros(40, 40, 1).unwrap();
        match extract_marker_segment(&img, Rect::new(10, 10, 10, 10), 1.5, 5) {
            Err(Error::MarkerNotFound { index, .. }) => assert_eq!(index, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn window_outside_image_is_not_found() {
        let img = square_image(30, 30, Rect::new(0, 0, 8, 8), 1.0);
        assert!(matches!(
            extract_marker_segment(&img, Rect::new(0, 0, 8, 8), 1.5, 0),
            Err(Error::MarkerNotFound { index: 0, .. })
        ));
    }

    #[test]
    fn two_pixel_centroid() {
        let seg = MarkerSegment {
            index: 0,
            window: Rect::new(0, 0, 3, 1),
            pixels: vec![1.0, 0.0, 3.0],
            local_background: 0.0,
        };
        // (0·1 + 2·3) / 4
        assert_eq!(centroid(&seg).unwrap(), Point::new(1.5, 0.0));
        assert!(matches!(centroid(&seg.scaled(0.0)), Err(Error::ZeroMass)));
    }

    #[test]
    fn gated_mass_robust_to_noise() {
        let rect = Rect::new(20, 20, 24, 24);
        let clean = square_image(64, 64, rect, 1.0);
        let reference = extract_marker_segment(&clean, rect, 1.5, 0).unwrap().mass();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let noisy = clean.map(|v| v + noise.sample(&mut rng));
            let mass = extract_marker_segment(&noisy, rect, 1.5, 0).unwrap().mass();
            worst = worst.max((mass - reference).abs() / reference);
        }
        assert!(worst < 0.02, "relative mass deviation {worst}");
    }

    #[test]
    fn identity_anchors() {
        let pts: Vec<Point> = (0..8).map(|k| Point::new((k * 37 % 11) as f64 * 10.0, (k * 5 % 7) as f64 * 13.0)).collect();
        let fit = solve_affine_ls(&AnchorSet::new(pts.clone(), pts).unwrap()).unwrap();
        let (ds, db) = fit.transform.max_entry_diff(&AffineTransform::identity());
        assert!(ds < 1e-12 && db < 1e-9);
        assert!(fit.f1 < 1e-20);
    }

    #[test]
    fn recovers_rotation_and_translation() {
        let layout = crate::pattern::make_layout(1024, 1024, 64, 16, 96).unwrap();
        let dest = layout.anchor_points();
        let forward = AffineTransform::similarity(1.0, 5f64.to_radians(), [3.0, -2.0]).unwrap();
        let src: Vec<Point> = dest.iter().map(|p| forward.apply(*p)).collect();
        let fit = solve_affine_ls(&AnchorSet::new(src, dest).unwrap()).unwrap();
        let (ds, db) = fit.transform.max_entry_diff(&forward.inverse());
        assert!(ds < 1e-12 && db < 1e-9, "{ds} {db}");
        assert!(fit.f1.sqrt() < 1e-9);
        assert!(fit.residuals.iter().all(|r| *r < 1e-9));
    }

    #[test]
    fn collinear_anchors_rejected() {
        let src: Vec<Point> = (0..8).map(|k| Point::new(k as f64, 2.0 * k as f64)).collect();
        let dst = src.clone();
        assert!(matches!(
            solve_affine_ls(&AnchorSet::new(src, dst).unwrap()),
            Err(Error::DegenerateAnchors(_))
        ));
    }

    #[test]
    fn anchor_set_requires_eight() {
        assert!(AnchorSet::new(vec![Point::default(); 7], vec![Point::default(); 7]).is_err());
    }

    #[test]
    fn locate_marker_finds_brightest_box() {
        let rect = Rect::new(40, 30, 12, 12);
        let img = square_image(100, 80, rect, 1.0);
        let c = locate_marker(&img, Point::new(50.0, 40.0), 12, 15.0, 0).unwrap();
        assert_eq!(c, rect.center());
    }

    fn random_anchor_set(rng: &mut ChaCha8Rng) -> AnchorSet {
        let dst: Vec<Point> = (0..8)
            .map(|_| Point::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)))
            .collect();
        let t = AffineTransform::similarity(rng.random_range(0.4..0.6), rng.random_range(-0.1..0.1), [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)]).unwrap();
        let src = dst
            .iter()
            .map(|p| {
                let q = t.apply(*p);
                Point::new(q.x + rng.random_range(-0.3..0.3), q.y + rng.random_range(-0.3..0.3))
            })
            .collect();
        AnchorSet::new(src, dst).unwrap()
    }

    #[test]
    fn fit_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let anchors = random_anchor_set(&mut rng);
        let fit = solve_affine_ls(&anchors).unwrap();
        let p = fit.transform.to_params();
        for _ in 0..1000 {
            let mut q = p;
            for (i, v) in q.iter_mut().enumerate() {
                let scale = if i < 4 { 1e-4 } else { 1e-1 };
                *v += rng.random_range(-scale..scale);
            }
            let Ok(t) = AffineTransform::from_params(&q) else { continue };
            assert!(fit.f1 <= anchors.mean_sq_residual(&t));
        }
    }

    #[test]
    fn jackknife_deviation_bounded_by_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let anchors = random_anchor_set(&mut rng);
        let full = solve_affine_ls(&anchors).unwrap().transform;
        for leave in 0..8 {
            let keep = |v: &[Point]| v.iter().enumerate().filter(|(i, _)| *i != leave).map(|(_, p)| *p).collect::<Vec<_>>();
            let sub = fit_affine(&keep(anchors.sources()), &keep(anchors.destinations())).unwrap().transform;
            // Compare mapped anchor positions: deviation is a few noise levels at most.
            for p in anchors.sources() {
                let d = full.apply(*p).distance(&sub.apply(*p));
                assert!(d < 5.0 * 0.3 / 0.4, "deviation {d}");
            }
        }
    }

    proptest! {
        #[test]
        fn centroid_translation_equivariant(dx in 0usize..20, dy in 0usize..20, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seg = MarkerSegment {
                index: 0,
                window: Rect::new(3, 4, 5, 6),
                pixels: (0..30).map(|_| rng.random_range(0.0..1.0)).collect(),
                local_background: 0.0,
            };
            let a = centroid(&seg).unwrap();
            let b = centroid(&seg.shifted(dx, dy)).unwrap();
            prop_assert!((b.x - a.x - dx as f64).abs() < 1e-12);
            prop_assert!((b.y - a.y - dy as f64).abs() < 1e-12);
        }

        #[test]
        fn centroid_scale_invariant(c in prop::sample::select(vec![0.5, 2.0, 4.0, 0.25, 8.0]), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seg = MarkerSegment {
                index: 0,
                window: Rect::new(0, 0, 4, 4),
                pixels: (0..16).map(|_| rng.random_range(0.0..1.0)).collect(),
                local_background: 0.0,
            };
            // power-of-two scales are exact in floating point
            prop_assert_eq!(centroid(&seg).unwrap(), centroid(&seg.scaled(c)).unwrap());
            let odd = centroid(&seg.scaled(c * 1.37)).unwrap();
            prop_assert!(odd.distance(&centroid(&seg).unwrap()) < 1e-12);
        }

        #[test]
        fn uniform_odd_square_centroid_is_center(cx in 10usize..40, cy in 10usize..40, half in 1usize..6) {
            let side = 2 * half + 1;
            let rect = Rect::new(cx - half, cy - half, side, side);
            let img = square_image(60, 60, rect, 0.7);
            let seg = extract_marker_segment(&img, rect, 1.5, 0).unwrap();
            let c = centroid(&seg).unwrap();
            prop_assert!(c.distance(&Point::new(cx as f64, cy as f64)) < 1e-12);
        }
    }
}
