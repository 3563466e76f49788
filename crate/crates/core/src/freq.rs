//! Single-frequency probes of the bar bands and the joint refinement of the
//! marker fit against the bands' designed phase.
//!
//! A band pixel `x` (digital frame) is looked up in the captured frame at
//! `T(x) = S·x + b`. The probe of band `m` is
//!
//! ```text
//! Z_m = Σ_x (I(T(x)) − mean) · exp(+j2π w_m·t(x))
//! ```
//!
//! with `t` the along-axis offset from the band origin. For a band rendered
//! as `0.5 + 0.5·cos(2π(w t − θ))` this gives `arg Z = 2πθ`, so
//! `Δ_m = Z_m·exp(−j2πθ_m)` is real and positive at alignment.
//!
//! Two evaluations of the coefficient are provided ([`ProbeMode`]). The
//! resampled form is the sum above with bilinear lookups. The native form
//! sums over captured pixels `q` at their digital positions `T⁻¹(q)`
//! under a tapered band window, which is the same coefficient taken at the
//! warped frequency. It needs no interpolation, so the probe magnitude does
//! not depend on the sub-pixel phase of the sampling grid; the resampled
//! form's magnitude does, which pulls its optimum towards pixel-aligned
//! transforms.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::pattern::{BarSpec, Orientation};
use crate::raster::{AffineTransform, ImageRaster, Point};
use crate::spatial::AnchorSet;

/// Fraction of band pixels that must land inside the captured frame.
pub const MIN_COVERAGE: f64 = 0.5;

/// Width of the across-axis window ramp, digital pixels.
pub const WINDOW_TAPER: f64 = 4.0;

/// How the single-bin coefficient is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    /// Bilinear lookups of the captured frame at every digital band pixel.
    Resampled,
    /// Captured pixels at their digital positions under a tapered window.
    #[default]
    Native,
}

/// Probed coefficient of one band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyProbe {
    pub z: Complex64,
    /// `|H|` of the ideal band at the design frequency.
    pub h_ref_mag: f64,
    /// Fraction of band pixels sampled inside the captured frame.
    pub coverage: f64,
}

/// Precomputed phasors and reference magnitude of one band, reusable across
/// many transforms.
#[derive(Debug, Clone)]
pub struct BandProbe {
    index: usize,
    bar: BarSpec,
    phasors: Vec<Complex64>,
    h_ref_mag: f64,
}

impl BandProbe {
    pub fn new(bar: &BarSpec, index: usize) -> Self {
        let len = match bar.orientation {
            Orientation::Horizontal => bar.rect.w,
            Orientation::Vertical => bar.rect.h,
        };
        let phasors: Vec<Complex64> = (0..len)
            .map(|t| Complex64::from_polar(1.0, TAU * bar.frequency * t as f64))
            .collect();
        // ideal band depends on t only, so the full-band sum factors
        let across = (bar.rect.area() / len.max(1)) as f64;
        let ideal: Vec<f64> = (0..len)
            .map(|t| 0.5 + 0.5 * (TAU * (bar.frequency * t as f64 - bar.phase)).cos())
            .collect();
        let mean = ideal.iter().sum::<f64>() / len as f64;
        let h: Complex64 = ideal
            .iter()
            .zip(&phasors)
            .map(|(v, e)| e * (v - mean))
            .sum();
        BandProbe {
            index,
            bar: *bar,
            phasors,
            h_ref_mag: h.norm() * across,
        }
    }

    pub fn bar(&self) -> &BarSpec {
        &self.bar
    }

    /// Probes a single-channel captured frame under the digital → captured
    /// map `t`.
    pub fn probe(&self, gray: &ImageRaster, t: &AffineTransform) -> Result<FrequencyProbe> {
        debug_assert_eq!(gray.channels(), 1);
        let rect = self.bar.rect;
        let [[s00, s01], [s10, s11]] = t.s();
        let [b0, b1] = t.b();
        let (w, h) = (gray.width(), gray.height());
        let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
        let data = gray.data();
        let (k1, kw) = (usize::from(w > 1), if h > 1 { w } else { 0 });
        let horizontal = self.bar.orientation == Orientation::Horizontal;

        let mut count = 0usize;
        let mut sum_v = 0.0;
        let mut sum_ve = Complex64::new(0.0, 0.0);
        let mut sum_e = Complex64::new(0.0, 0.0);
        for (j, y) in (rect.y..rect.bottom()).enumerate() {
            let y = y as f64;
            let x0 = rect.x as f64;
            let mut px = s00 * x0 + s01 * y + b0;
            let mut py = s10 * x0 + s11 * y + b1;
            for i in 0..rect.w {
                if px >= 0.0 && px <= max_x && py >= 0.0 && py <= max_y {
                    let ix = (px as usize).min(w.saturating_sub(2));
                    let iy = (py as usize).min(h.saturating_sub(2));
                    let fx = px - ix as f64;
                    let fy = py - iy as f64;
                    let k = iy * w + ix;
                    let top = data[k] + (data[k + k1] - data[k]) * fx;
                    let bottom = data[k + kw] + (data[k + kw + k1] - data[k + kw]) * fx;
                    let v = top + (bottom - top) * fy;
                    let e = self.phasors[if horizontal { i } else { j }];
                    count += 1;
                    sum_v += v;
                    sum_ve += e * v;
                    sum_e += e;
                }
                px += s00;
                py += s10;
            }
        }
        let coverage = count as f64 / rect.area() as f64;
        if coverage < MIN_COVERAGE {
            return Err(Error::InsufficientOverlap {
                index: self.index,
                percent: 100.0 * coverage,
            });
        }
        let mean = sum_v / count as f64;
        Ok(FrequencyProbe {
            z: sum_ve - sum_e * mean,
            h_ref_mag: self.h_ref_mag,
            coverage,
        })
    }

    /// Interpolation-free coefficient: every captured pixel whose digital
    /// position falls inside the band contributes with the window weight.
    /// `h_ref_mag` is the ideal band probed over the same samples.
    pub fn probe_native(&self, gray: &ImageRaster, t: &AffineTransform) -> Result<FrequencyProbe> {
        debug_assert_eq!(gray.channels(), 1);
        let r = self.bar.rect;
        let (x_lo, x_hi) = (r.x as f64 - 0.5, r.right() as f64 - 0.5);
        let (y_lo, y_hi) = (r.y as f64 - 0.5, r.bottom() as f64 - 0.5);
        let corners = [(x_lo, y_lo), (x_hi, y_lo), (x_lo, y_hi), (x_hi, y_hi)]
            .map(|(x, y)| t.apply(Point::new(x, y)));
        let fold = |f: fn(&Point) -> f64, init: f64, m: fn(f64, f64) -> f64| {
            corners.iter().map(f).fold(init, m)
        };
        let (w, h) = (gray.width(), gray.height());
        let qx0 = fold(|p| p.x, f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let qy0 = fold(|p| p.y, f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let qx1 = (fold(|p| p.x, f64::NEG_INFINITY, f64::max).ceil().max(-1.0) as i64 + 1).clamp(0, w as i64) as usize;
        let qy1 = (fold(|p| p.y, f64::NEG_INFINITY, f64::max).ceil().max(-1.0) as i64 + 1).clamp(0, h as i64) as usize;

        let inv = t.inverse();
        let [[a00, a01], [a10, a11]] = inv.s();
        let [c0, c1] = inv.b();
        let horizontal = self.bar.orientation == Orientation::Horizontal;
        let period = 1.0 / self.bar.frequency;
        let (taper_x, taper_y) = if horizontal {
            (along_taper(x_hi - x_lo, period), WINDOW_TAPER.min(0.5 * (y_hi - y_lo)))
        } else {
            (WINDOW_TAPER.min(0.5 * (x_hi - x_lo)), along_taper(y_hi - y_lo, period))
        };
        let origin = if horizontal { r.x as f64 } else { r.y as f64 };
        let k = TAU * self.bar.frequency;
        let design = Complex64::from_polar(1.0, -TAU * self.bar.phase);
        let data = gray.data();

        let mut sw = 0.0;
        let mut swi = 0.0;
        let mut swd = 0.0;
        let mut swe = Complex64::new(0.0, 0.0);
        let mut swie = Complex64::new(0.0, 0.0);
        let mut swde = Complex64::new(0.0, 0.0);
        for qy in qy0..qy1 {
            let row = &data[qy * w..(qy + 1) * w];
            for (qx, &v) in row.iter().enumerate().take(qx1).skip(qx0) {
                let (qx, qyf) = (qx as f64, qy as f64);
                let ux = a00 * qx + a01 * qyf + c0;
                let uy = a10 * qx + a11 * qyf + c1;
                let wx = taper(ux, x_lo, x_hi, taper_x);
                if wx == 0.0 {
                    continue;
                }
                let wgt = wx * taper(uy, y_lo, y_hi, taper_y);
                if wgt == 0.0 {
                    continue;
                }
                let along = if horizontal { ux } else { uy } - origin;
                let (sn, cs) = (k * along).sin_cos();
                let e = Complex64::new(cs, sn);
                // ideal band value 0.5 + 0.5·cos(2π(w t − θ))
                let ideal = 0.5 + 0.5 * (e * design).re;
                sw += wgt;
                swi += wgt * v;
                swd += wgt * ideal;
                swe += e * wgt;
                swie += e * (wgt * v);
                swde += e * (wgt * ideal);
            }
        }
        let full = t.det() * (x_hi - x_lo - taper_x) * (y_hi - y_lo - taper_y);
        let coverage = if full > 0.0 { (sw / full).min(1.0) } else { 0.0 };
        if coverage < MIN_COVERAGE || sw <= 0.0 {
            return Err(Error::InsufficientOverlap {
                index: self.index,
                percent: 100.0 * coverage,
            });
        }
        let z = swie - swe * (swi / sw);
        let href = swde - swe * (swd / sw);
        Ok(FrequencyProbe {
            z,
            h_ref_mag: href.norm(),
            coverage,
        })
    }

    pub fn probe_with(&self, gray: &ImageRaster, t: &AffineTransform, mode: ProbeMode) -> Result<FrequencyProbe> {
        match mode {
            ProbeMode::Resampled => self.probe(gray, t),
            ProbeMode::Native => self.probe_native(gray, t),
        }
    }
}

/// Along-axis ramp width for a band of length `len` and bar period `P`.
/// A ramp of width `2P` is a box smoothed by a triangle kernel whose
/// spectrum `sinc²(Pν)` has double zeros at every multiple of the bar
/// frequency. The mirrored term of the bar and the DC then contribute
/// neither to the probe nor to its first derivatives at alignment.
fn along_taper(len: f64, period: f64) -> f64 {
    (2.0 * period).min(0.5 * len)
}

/// Window that is 1 inside `[lo + τ, hi − τ]`, 0 outside `[lo, hi]`, with
/// edges given by the integral of a triangle kernel of width `τ`.
#[inline]
fn taper(u: f64, lo: f64, hi: f64, tau: f64) -> f64 {
    let d = (u - lo).min(hi - u);
    if d <= 0.0 {
        0.0
    } else if d >= tau {
        1.0
    } else {
        let s = d / tau;
        if s < 0.5 {
            2.0 * s * s
        } else {
            1.0 - 2.0 * (1.0 - s) * (1.0 - s)
        }
    }
}

/// Single-bin coefficient of `bar` in `captured` (channel mean for colour
/// input) under the digital → captured map `t`.
pub fn probe_coefficient(
    captured: &ImageRaster,
    t: &AffineTransform,
    bar: &BarSpec,
) -> Result<FrequencyProbe> {
    BandProbe::new(bar, 0).probe(&captured.to_gray(), t)
}

/// `Z·exp(−j2πθ)`, optionally divided by the ideal band's magnitude.
pub fn delta_m(probe: &FrequencyProbe, theta: f64, normalize: bool) -> Complex64 {
    let d = probe.z * Complex64::from_polar(1.0, -TAU * theta);
    if normalize && probe.h_ref_mag > 0.0 {
        d / probe.h_ref_mag
    } else {
        d
    }
}

fn f2_of(
    gray: &ImageRaster,
    t: &AffineTransform,
    bands: &[BandProbe],
    normalize: bool,
    mode: ProbeMode,
) -> Result<f64> {
    let mut f2 = 0.0;
    for band in bands {
        let probe = band.probe_with(gray, t, mode)?;
        f2 += delta_m(&probe, band.bar.phase, normalize).re;
    }
    Ok(f2)
}

/// `Σ_m Re(Δ_m)` over all bands, with the resampled probe.
pub fn objective_f2(
    captured: &ImageRaster,
    t: &AffineTransform,
    bars: &[BarSpec],
    normalize: bool,
) -> Result<f64> {
    objective_f2_with(captured, t, bars, normalize, ProbeMode::Resampled)
}

/// `Σ_m Re(Δ_m)` with an explicit probe evaluation.
pub fn objective_f2_with(
    captured: &ImageRaster,
    t: &AffineTransform,
    bars: &[BarSpec],
    normalize: bool,
    mode: ProbeMode,
) -> Result<f64> {
    let gray = captured.to_gray();
    let parts = par::map_indexed(bars.len(), |m| {
        let band = BandProbe::new(&bars[m], m);
        band.probe_with(&gray, t, mode)
            .map(|p| delta_m(&p, bars[m].phase, normalize).re)
    });
    parts.into_iter().sum()
}

/// Settings of the joint refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineOptions {
    /// Weight of the phase term.
    pub beta: f64,
    /// Preconditioner step for the four `S` entries. `None` derives it
    /// from the objective's curvature at the initial point.
    pub step_s: Option<f64>,
    /// Preconditioner step for the translation (captured pixels² per unit
    /// objective). `None` derives it like `step_s`.
    pub step_b: Option<f64>,
    pub max_iters: usize,
    /// Convergence threshold on the translation update, captured pixels.
    pub tol_b: f64,
    /// Convergence threshold on the `S` update.
    pub tol_s: f64,
    /// Divide `Δ_m` by the ideal band magnitude.
    pub normalize: bool,
    pub probe: ProbeMode,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            beta: 1000.0,
            step_s: None,
            step_b: None,
            max_iters: 100,
            tol_b: 1e-3,
            tol_s: 1e-6,
            normalize: true,
            probe: ProbeMode::Native,
        }
    }
}

impl RefineOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.tol_b > 0.0 && self.tol_s > 0.0) {
            return bad("convergence thresholds must be positive".into());
        }
        for step in [self.step_s, self.step_b].into_iter().flatten() {
            if !(step > 0.0 && step.is_finite()) {
                return bad(format!("step sizes must be positive, got {step}"));
            }
        }
        Ok(())
    }
}

/// Outcome of the joint refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Digital → captured map.
    #[serde(flatten)]
    pub transform: AffineTransform,
    pub f1: f64,
    pub f2: f64,
    pub iters: usize,
    pub converged: bool,
    /// `|T⁻¹(c_k) − u_k|` per marker, digital pixels.
    pub marker_residuals: Vec<f64>,
    /// Set when the line search failed away from a stationary point.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub line_search_failed: bool,
    /// Objective `f1 − β·f2` at the start and after every accepted step.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

/// Central-difference steps: `S` entries, then translation (pixels).
const GRAD_STEP: [f64; 6] = [1e-6, 1e-6, 1e-6, 1e-6, 1e-4, 1e-4];
/// Probe steps for the curvature estimate behind the automatic step sizes.
const CURV_STEP: [f64; 6] = [1e-4, 1e-4, 1e-4, 1e-4, 0.05, 0.05];
const MAX_HALVINGS: usize = 20;

/// `f1 − β·f2` over parameters `[S00, S01, S10, S11, c0, c1]`, where
/// `c = T(center)` decouples translation from the linear part.
pub(crate) struct JointObjective<'a> {
    gray: ImageRaster,
    bands: Vec<BandProbe>,
    anchors: &'a AnchorSet,
    center: Point,
    beta: f64,
    normalize: bool,
    mode: ProbeMode,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Eval {
    pub j: f64,
    pub f1: f64,
    pub f2: f64,
}

impl<'a> JointObjective<'a> {
    pub(crate) fn new(
        captured: &ImageRaster,
        anchors: &'a AnchorSet,
        bars: &[BarSpec],
        opts: &RefineOptions,
    ) -> Self {
        let dst = anchors.destinations();
        let n = dst.len() as f64;
        let center = Point::new(
            dst.iter().map(|p| p.x).sum::<f64>() / n,
            dst.iter().map(|p| p.y).sum::<f64>() / n,
        );
        JointObjective {
            gray: captured.to_gray(),
            bands: bars.iter().enumerate().map(|(m, b)| BandProbe::new(b, m)).collect(),
            anchors,
            center,
            beta: opts.beta,
            normalize: opts.normalize,
            mode: opts.probe,
        }
    }

    pub(crate) fn params(&self, t: &AffineTransform) -> [f64; 6] {
        let s = t.s();
        let c = t.apply(self.center);
        [s[0][0], s[0][1], s[1][0], s[1][1], c.x, c.y]
    }

    pub(crate) fn transform(&self, p: &[f64; 6]) -> Result<AffineTransform> {
        let (cx, cy) = (self.center.x, self.center.y);
        AffineTransform::new(
            [[p[0], p[1]], [p[2], p[3]]],
            [p[4] - p[0] * cx - p[1] * cy, p[5] - p[2] * cx - p[3] * cy],
        )
    }

    fn f1(&self, t: &AffineTransform) -> f64 {
        self.anchors.mean_sq_residual(&t.inverse())
    }

    pub(crate) fn eval(&self, p: &[f64; 6]) -> Result<Eval> {
        let t = self.transform(p)?;
        let f1 = self.f1(&t);
        let f2 = if self.beta > 0.0 {
            f2_of(&self.gray, &t, &self.bands, self.normalize, self.mode)?
        } else {
            0.0
        };
        Ok(Eval {
            j: f1 - self.beta * f2,
            f1,
            f2,
        })
    }

    fn j_at(&self, p: &[f64; 6], i: usize, h: f64) -> Result<f64> {
        let mut q = *p;
        q[i] += h;
        Ok(self.eval(&q)?.j)
    }

    /// Central-difference gradient with steps `h`.
    pub(crate) fn gradient_with(&self, p: &[f64; 6], h: &[f64; 6]) -> Result<[f64; 6]> {
        let parts = par::map_indexed(12, |k| {
            let step = if k % 2 == 0 { h[k / 2] } else { -h[k / 2] };
            self.j_at(p, k / 2, step)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        Ok(std::array::from_fn(|i| (parts[2 * i] - parts[2 * i + 1]) / (2.0 * h[i])))
    }

    pub(crate) fn gradient(&self, p: &[f64; 6]) -> Result<[f64; 6]> {
        self.gradient_with(p, &GRAD_STEP)
    }

    /// Diagonal second differences `|∂²J/∂p_i²|`.
    fn curvature(&self, p: &[f64; 6], j0: f64) -> Result<[f64; 6]> {
        let parts = par::map_indexed(12, |k| {
            let h = CURV_STEP[k / 2];
            self.j_at(p, k / 2, if k % 2 == 0 { h } else { -h })
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        Ok(std::array::from_fn(|i| {
            ((parts[2 * i] - 2.0 * j0 + parts[2 * i + 1]) / (CURV_STEP[i] * CURV_STEP[i])).abs()
        }))
    }

    fn residuals(&self, t: &AffineTransform) -> Vec<f64> {
        let inv = t.inverse();
        self.anchors
            .sources()
            .iter()
            .zip(self.anchors.destinations())
            .map(|(s, d)| inv.apply(*s).distance(d))
            .collect()
    }
}

fn group_steps(curv: &[f64; 6], opts: &RefineOptions) -> [f64; 6] {
    let auto = |range: std::ops::Range<usize>| {
        let n = range.len() as f64;
        let mean = range.map(|i| curv[i]).sum::<f64>() / n;
        if mean > 0.0 && mean.is_finite() {
            1.0 / mean
        } else {
            1.0
        }
    };
    let s = opts.step_s.unwrap_or_else(|| auto(0..4));
    let b = opts.step_b.unwrap_or_else(|| auto(4..6));
    [s, s, s, s, b, b]
}

/// Minimizes `f1 − β·f2` from `init` (digital → captured) by preconditioned
/// gradient descent with central-difference gradients and a halving line
/// search. `f1` is the mean squared marker residual in digital pixels;
/// `f2 = Σ Re(Δ_m)`.
pub fn refine_dual_domain(
    captured: &ImageRaster,
    init: &AffineTransform,
    anchors: &AnchorSet,
    bars: &[BarSpec],
    opts: &RefineOptions,
) -> Result<RegistrationResult> {
    opts.validate()?;
    let objective = JointObjective::new(captured, anchors, bars, opts);
    let mut p = objective.params(init);
    let mut cur = objective.eval(&p)?;
    let steps = group_steps(&objective.curvature(&p, cur.j)?, opts);

    let mut trace = vec![cur.j];
    let mut alpha = 1.0f64;
    let mut iters = 0;
    let mut converged = false;
    let mut line_search_failed = false;
    while iters < opts.max_iters {
        let g = objective.gradient(&p)?;
        let dir: Vec<f64> = (0..6).map(|i| -steps[i] * g[i]).collect();
        let small = |scale: f64| {
            dir[..4].iter().all(|d| (d * scale).abs() < opts.tol_s)
                && dir[4..].iter().all(|d| (d * scale).abs() < opts.tol_b)
        };
        let mut a = (2.0 * alpha).min(1.0);
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut q = p;
            for i in 0..6 {
                q[i] += a * dir[i];
            }
            if let Ok(e) = objective.eval(&q) {
                if e.j < cur.j {
                    accepted = Some((q, e));
                    break;
                }
            }
            a *= 0.5;
        }
        let Some((q, e)) = accepted else {
            if small(1.0) {
                converged = true;
            } else {
                line_search_failed = true;
                log::warn!("line search failed after {MAX_HALVINGS} halvings at iteration {iters}");
            }
            break;
        };
        iters += 1;
        alpha = a;
        let ds = (0..4).map(|i| (q[i] - p[i]).abs()).fold(0.0, f64::max);
        let db = (4..6).map(|i| (q[i] - p[i]).abs()).fold(0.0, f64::max);
        p = q;
        cur = e;
        trace.push(cur.j);
        if ds < opts.tol_s && db < opts.tol_b {
            converged = true;
            break;
        }
    }
    let transform = objective.transform(&p)?;
    Ok(RegistrationResult {
        marker_residuals: objective.residuals(&transform),
        transform,
        f1: cur.f1,
        f2: if opts.beta > 0.0 {
            cur.f2
        } else {
            f2_of(&objective.gray, &transform, &objective.bands, opts.normalize, opts.probe)?
        },
        iters,
        converged,
        line_search_failed,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{make_layout, render_target, LayoutSpec};
    use crate::raster::{bilinear_sample, Rect};
    use crate::sim::{simulate_capture, CaptureGroundTruth};
    use crate::spatial::{spatial_register, SpatialOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const MODES: [ProbeMode; 2] = [ProbeMode::Resampled, ProbeMode::Native];

    fn cycles(z: Complex64) -> f64 {
        z.arg() / TAU
    }

    fn wrap(c: f64) -> f64 {
        c - c.round()
    }

    /// Whole image filled with the band's periodic pattern.
    fn periodic_image(bar: &BarSpec, w: usize, h: usize) -> ImageRaster {
        ImageRaster::from_fn(w, h, 1, |x, y, _| bar.ideal_value(x as f64, y as f64)).unwrap()
    }

    fn oracle_probe(img: &ImageRaster, t: &AffineTransform, bar: &BarSpec) -> Complex64 {
        let mut samples = Vec::new();
        for y in bar.rect.y..bar.rect.bottom() {
            for x in bar.rect.x..bar.rect.right() {
                let s = bilinear_sample(img, t.apply(Point::new(x as f64, y as f64)), 0);
                if s.in_bounds {
                    let tt = match bar.orientation {
                        Orientation::Horizontal => (x - bar.rect.x) as f64,
                        Orientation::Vertical => (y - bar.rect.y) as f64,
                    };
                    samples.push((s.value, tt));
                }
            }
        }
        let mean = samples.iter().map(|s| s.0).sum::<f64>() / samples.len() as f64;
        let mut z = Complex64::new(0.0, 0.0);
        for (v, tt) in samples {
            let ang = TAU * bar.frequency * tt;
            z += Complex64::new((v - mean) * ang.cos(), (v - mean) * ang.sin());
        }
        z
    }

    #[test]
    fn probe_matches_double_loop_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let waves: Vec<(f64, f64, f64)> = (0..4)
                .map(|_| (rng.random_range(0.01..0.2), rng.random_range(0.01..0.2), rng.random_range(0.0..TAU)))
                .collect();
            let img = ImageRaster::from_fn(120, 100, 1, |x, y, _| {
                0.5 + waves.iter().map(|(a, b, p)| 0.1 * (a * x as f64 + b * y as f64 + p).sin()).sum::<f64>()
            })
            .unwrap();
            let orientation = if rng.random_bool(0.5) { Orientation::Horizontal } else { Orientation::Vertical };
            let bar = BarSpec {
                rect: Rect::new(rng.random_range(5..20), rng.random_range(5..20), rng.random_range(30..80), rng.random_range(20..60)),
                orientation,
                frequency: rng.random_range(0.05..0.3),
                phase: rng.random_range(0.0..1.0),
            };
            let t = AffineTransform::similarity(rng.random_range(0.9..1.1), rng.random_range(-0.05..0.05), [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).unwrap();
            let got = probe_coefficient(&img, &t, &bar).unwrap().z;
            let want = oracle_probe(&img, &t, &bar);
            assert!((got - want).norm() <= 1e-9 * want.norm(), "{got} vs {want}");
        }
    }

    fn phased_layout(phase: f64) -> LayoutSpec {
        let mut layout = make_layout(512, 384, 32, 16, 64).unwrap();
        for (m, bar) in layout.bars.iter_mut().enumerate() {
            bar.phase = (phase + 0.17 * m as f64).fract();
        }
        layout
    }

    #[test]
    fn rendered_bands_recover_designed_phase() {
        let layout = phased_layout(0.3);
        let frame = render_target(&ImageRaster::zeros(8, 8, 1).unwrap(), &layout).unwrap();
        let gray = frame.to_gray();
        for (m, bar) in layout.bars.iter().enumerate() {
            for mode in MODES {
                let probe = BandProbe::new(bar, m).probe_with(&gray, &AffineTransform::identity(), mode).unwrap();
                assert!(wrap(cycles(probe.z) - bar.phase).abs() < 1e-6, "{mode:?} band {m}");
                let d = delta_m(&probe, bar.phase, true);
                assert!(d.re > 0.0 && d.arg().abs() < 1e-6);
                assert!((d.re - 1.0).abs() < 1e-9, "{mode:?} {}", d.re);
            }
        }
    }

    #[test]
    fn half_and_quarter_period_shifts() {
        let bar = BarSpec {
            rect: Rect::new(40, 30, 128, 24),
            orientation: Orientation::Horizontal,
            frequency: 1.0 / 16.0,
            phase: 0.2,
        };
        let img = periodic_image(&bar, 240, 90);
        for mode in MODES {
            let band = BandProbe::new(&bar, 0);
            let base = band.probe_with(&img, &AffineTransform::identity(), mode).unwrap();
            let half = band.probe_with(&img, &AffineTransform::translation(8.0, 0.0), mode).unwrap();
            let shift = wrap(cycles(half.z) - cycles(base.z));
            assert!((shift.abs() - 0.5).abs() * TAU < 1e-6, "{mode:?} {shift}");
            let dh = delta_m(&half, bar.phase, true);
            assert!((dh.re + dh.norm()).abs() < 1e-6 * dh.norm(), "{mode:?} {dh}");
            let quarter = band.probe_with(&img, &AffineTransform::translation(4.0, 0.0), mode).unwrap();
            let dq = delta_m(&quarter, bar.phase, true);
            assert!(dq.re.abs() < 1e-3 * dq.norm(), "{mode:?} {dq}");
        }
    }

    #[test]
    fn probe_rejects_bands_outside_capture() {
        let bar = BarSpec {
            rect: Rect::new(10, 10, 64, 16),
            orientation: Orientation::Vertical,
            frequency: 0.125,
            phase: 0.0,
        };
        let img = periodic_image(&bar, 100, 40);
        for mode in MODES {
            let far = BandProbe::new(&bar, 2).probe_with(&img, &AffineTransform::translation(70.0, 0.0), mode);
            assert!(matches!(far, Err(Error::InsufficientOverlap { index: 2, .. })), "{mode:?}");
        }
    }

    struct Scene {
        layout: LayoutSpec,
        captured: ImageRaster,
        truth: AffineTransform,
        anchors: AnchorSet,
    }

    fn scene(truth: AffineTransform) -> Scene {
        let layout = make_layout(512, 512, 48, 16, 72).unwrap();
        let content = ImageRaster::from_fn(layout.content.w, layout.content.h, 1, |x, y, _| {
            0.4 + 0.2 * (x as f64 * 0.05).sin() * (y as f64 * 0.03).cos()
        })
        .unwrap();
        let frame = render_target(&content, &layout).unwrap();
        let captured = simulate_capture(&frame, &CaptureGroundTruth::ideal(truth)).unwrap();
        let anchors = spatial_register(&captured, &layout, None, &SpatialOptions::default()).unwrap().anchors;
        Scene {
            layout,
            captured,
            truth,
            anchors,
        }
    }

    fn rotated_scene() -> Scene {
        scene(AffineTransform::similarity_about(0.97, 0.006, Point::new(255.5, 255.5), [30.3, 27.8]).unwrap())
    }

    #[test]
    fn f2_near_four_at_truth_and_negative_at_half_period() {
        // off the pixel grid the simulator's own interpolation damps the
        // bands by a percent or so
        let s = scene(AffineTransform::translation(21.0, 17.0));
        for mode in MODES {
            let f2 = objective_f2_with(&s.captured, &s.truth, &s.layout.bars, true, mode).unwrap();
            assert!((f2 - 4.0).abs() < 0.04, "{mode:?} {f2}");
            let shift = 8.0 * s.truth.scale();
            let off = AffineTransform::translation(shift, shift).compose(&s.truth);
            let f2_off = objective_f2_with(&s.captured, &off, &s.layout.bars, true, mode).unwrap();
            assert!(f2_off < 0.0, "{mode:?} {f2_off}");
        }
    }

    #[test]
    fn f2_ignores_constant_offsets() {
        let s = rotated_scene();
        let brighter = s.captured.map(|v| v + 0.1);
        let t = AffineTransform::translation(0.3, -0.2).compose(&s.truth);
        for mode in MODES {
            let a = objective_f2_with(&s.captured, &t, &s.layout.bars, true, mode).unwrap();
            let b = objective_f2_with(&brighter, &t, &s.layout.bars, true, mode).unwrap();
            assert!((a - b).abs() < 1e-9, "{mode:?} {a} {b}");
        }
    }

    #[test]
    fn f2_peaks_at_truth_against_period_shifts() {
        let s = rotated_scene();
        let scale = s.truth.scale();
        for mode in MODES {
            let at = objective_f2_with(&s.captured, &s.truth, &s.layout.bars, true, mode).unwrap();
            for (dx, dy) in [(16.0, 0.0), (-16.0, 0.0), (0.0, 16.0), (0.0, -16.0)] {
                let t = AffineTransform::translation(dx * scale, dy * scale).compose(&s.truth);
                let f2 = objective_f2_with(&s.captured, &t, &s.layout.bars, true, mode).unwrap();
                assert!(at >= f2, "{mode:?} ({dx}, {dy}): {at} < {f2}");
            }
        }
    }

    #[test]
    fn init_at_truth_stays_put() {
        let s = scene(AffineTransform::translation(21.0, 17.0));
        let opts = RefineOptions::default();
        let r = refine_dual_domain(&s.captured, &s.truth, &s.anchors, &s.layout.bars, &opts).unwrap();
        let (ds, db) = r.transform.max_entry_diff(&s.truth);
        assert!(r.converged && r.iters <= 2, "{} iterations {ds} {db} {:?} {:?}", r.iters, r.objective_trace, r.transform);
        assert!(ds < opts.tol_s && db < opts.tol_b, "{ds} {db}");
    }

    #[test]
    fn recovers_perturbed_initialization() {
        let s = rotated_scene();
        let init = AffineTransform::translation(0.5, -0.5)
            .compose(&s.truth)
            .compose(&AffineTransform::new([[1.001, 0.0], [0.0, 1.001]], [0.0, 0.0]).unwrap());
        let r = refine_dual_domain(&s.captured, &init, &s.anchors, &s.layout.bars, &RefineOptions::default()).unwrap();
        assert!(r.converged);
        let err = crate::pipeline::registration_error(&r.transform, &s.truth, s.layout.content);
        assert!(err.mean_displacement < 0.05, "{err:?}");
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.marker_residuals.len(), 8);
    }

    #[test]
    fn central_gradient_matches_fourth_order_stencil() {
        let s = rotated_scene();
        let opts = RefineOptions::default();
        let obj = JointObjective::new(&s.captured, &s.anchors, &s.layout.bars, &opts);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let mut p = obj.params(&s.truth);
            for (i, v) in p.iter_mut().enumerate() {
                *v += if i < 4 { rng.random_range(-5e-4..5e-4) } else { rng.random_range(-0.4..0.4) };
            }
            let g = obj.gradient(&p).unwrap();
            for group in [0..4, 4..6] {
                let mut diff = 0.0;
                let mut norm = 0.0;
                for i in group {
                    let h = GRAD_STEP[i];
                    let f = |k: f64| obj.j_at(&p, i, k * h).unwrap();
                    let g4 = (-f(2.0) + 8.0 * f(1.0) - 8.0 * f(-1.0) + f(-2.0)) / (12.0 * h);
                    diff += (g[i] - g4).powi(2);
                    norm += g4 * g4;
                }
                assert!(diff.sqrt() <= 1e-4 * norm.sqrt(), "{} vs {}", diff.sqrt(), norm.sqrt());
            }
        }
    }

    #[test]
    fn zero_beta_reproduces_closed_form() {
        let s = rotated_scene();
        let closed = crate::spatial::solve_affine_ls(&s.anchors).unwrap().transform.inverse();
        let init = AffineTransform::translation(0.3, -0.2).compose(&closed);
        let opts = RefineOptions {
            beta: 0.0,
            ..RefineOptions::default()
        };
        let r = refine_dual_domain(&s.captured, &init, &s.anchors, &s.layout.bars, &opts).unwrap();
        assert!(r.converged);
        let err = crate::pipeline::registration_error(&r.transform, &closed, s.layout.content);
        assert!(err.max_displacement < 10.0 * opts.tol_b, "{err:?}");
        let f1_closed = s.anchors.mean_sq_residual(&closed.inverse());
        assert!(r.f1 <= f1_closed + 1e-9);
    }

    #[test]
    fn refinement_is_deterministic() {
        let s = rotated_scene();
        let init = AffineTransform::translation(0.2, 0.1).compose(&s.truth);
        let run = || refine_dual_domain(&s.captured, &init, &s.anchors, &s.layout.bars, &RefineOptions::default()).unwrap();
        let a = run();
        let b = crate::Execution::Sequential.run(run);
        assert_eq!(a, b);
        assert_eq!(a.transform.to_params().map(f64::to_bits), b.transform.to_params().map(f64::to_bits));
    }

    #[test]
    fn options_validation() {
        assert!(RefineOptions { beta: -1.0, ..Default::default() }.validate().is_err());
        assert!(RefineOptions { tol_b: 0.0, ..Default::default() }.validate().is_err());
        assert!(RefineOptions { step_s: Some(-1.0), ..Default::default() }.validate().is_err());
        assert!(RefineOptions::default().validate().is_ok());
    }

    #[test]
    fn result_json_fields() {
        let s = scene(AffineTransform::translation(21.0, 17.0));
        let r = refine_dual_domain(&s.captured, &s.truth, &s.anchors, &s.layout.bars, &RefineOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["S", "b", "f1", "f2", "iters", "converged", "marker_residuals"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: RegistrationResult = serde_json::from_value(v).unwrap();
        assert_eq!(back.transform, r.transform);
    }
}
