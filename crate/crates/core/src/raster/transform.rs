use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{Error, Result};

/// Smallest determinant accepted for the linear part.
pub const MIN_DET: f64 = 1e-12;

/// The map `x ↦ S·x + b`.
///
/// `S` is restricted to a positive determinant: the registered image pairs
/// never contain a reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct AffineTransform {
    s: [[f64; 2]; 2],
    b: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct RawTransform {
    #[serde(rename = "S")]
    s: [[f64; 2]; 2],
    b: [f64; 2],
}

impl TryFrom<RawTransform> for AffineTransform {
    type Error = Error;

    fn try_from(raw: RawTransform) -> Result<Self> {
        AffineTransform::new(raw.s, raw.b)
    }
}

impl From<AffineTransform> for RawTransform {
    fn from(t: AffineTransform) -> Self {
        RawTransform { s: t.s, b: t.b }
    }
}

impl AffineTransform {
    pub fn new(s: [[f64; 2]; 2], b: [f64; 2]) -> Result<Self> {
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        if !(det > MIN_DET) || s.iter().flatten().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::SingularTransform { det });
        }
        Ok(AffineTransform { s, b })
    }

    pub const fn identity() -> Self {
        AffineTransform {
            s: [[1.0, 0.0], [0.0, 1.0]],
            b: [0.0, 0.0],
        }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        AffineTransform {
            s: [[1.0, 0.0], [0.0, 1.0]],
            b: [dx, dy],
        }
    }

    /// Isotropic scale `scale` and counter-clockwise (in the y-down frame:
    /// clockwise on screen) rotation `angle` radians, followed by `b`.
    pub fn similarity(scale: f64, angle: f64, b: [f64; 2]) -> Result<Self> {
        let (sin, cos) = angle.sin_cos();
        Self::new(
            [[scale * cos, -scale * sin], [scale * sin, scale * cos]],
            b,
        )
    }

    /// Same as [`AffineTransform::similarity`] but pivoting about `center`,
    /// which is mapped to `center + shift`.
    pub fn similarity_about(scale: f64, angle: f64, center: Point, shift: [f64; 2]) -> Result<Self> {
        let linear = Self::similarity(scale, angle, [0.0, 0.0])?;
        let moved = linear.apply(center);
        Self::new(
            linear.s,
            [
                center.x + shift[0] - moved.x,
                center.y + shift[1] - moved.y,
            ],
        )
    }

    pub fn s(&self) -> [[f64; 2]; 2] {
        self.s
    }

    pub fn b(&self) -> [f64; 2] {
        self.b
    }

    pub fn det(&self) -> f64 {
        self.s[0][0] * self.s[1][1] - self.s[0][1] * self.s[1][0]
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.s[0][0] * p.x + self.s[0][1] * p.y + self.b[0],
            self.s[1][0] * p.x + self.s[1][1] * p.y + self.b[1],
        )
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &AffineTransform) -> AffineTransform {
        let a = &self.s;
        let c = &inner.s;
        let s = [
            [
                a[0][0] * c[0][0] + a[0][1] * c[1][0],
                a[0][0] * c[0][1] + a[0][1] * c[1][1],
            ],
            [
                a[1][0] * c[0][0] + a[1][1] * c[1][0],
                a[1][0] * c[0][1] + a[1][1] * c[1][1],
            ],
        ];
        let b = [
            a[0][0] * inner.b[0] + a[0][1] * inner.b[1] + self.b[0],
            a[1][0] * inner.b[0] + a[1][1] * inner.b[1] + self.b[1],
        ];
        // Product of two positive determinants stays positive.
        AffineTransform { s, b }
    }

    pub fn inverse(&self) -> AffineTransform {
        let det = self.det();
        let s = [
            [self.s[1][1] / det, -self.s[0][1] / det],
            [-self.s[1][0] / det, self.s[0][0] / det],
        ];
        let b = [
            -(s[0][0] * self.b[0] + s[0][1] * self.b[1]),
            -(s[1][0] * self.b[0] + s[1][1] * self.b[1]),
        ];
        AffineTransform { s, b }
    }

    /// `sqrt(det S)`, the area-preserving isotropic scale.
    pub fn scale(&self) -> f64 {
        self.det().sqrt()
    }

    /// Rotation angle of the orthogonal factor in the polar decomposition
    /// `S = R·P`. For 2×2 matrices with positive determinant the rotation
    /// is `atan2(s10 - s01, s00 + s11)`.
    pub fn rotation_angle(&self) -> f64 {
        (self.s[1][0] - self.s[0][1]).atan2(self.s[0][0] + self.s[1][1])
    }

    /// Parameters in the order `[s00, s01, s10, s11, b0, b1]`.
    pub fn to_params(&self) -> [f64; 6] {
        [
            self.s[0][0],
            self.s[0][1],
            self.s[1][0],
            self.s[1][1],
            self.b[0],
            self.b[1],
        ]
    }

    pub fn from_params(p: &[f64; 6]) -> Result<Self> {
        Self::new([[p[0], p[1]], [p[2], p[3]]], [p[4], p[5]])
    }

    /// Largest absolute entrywise difference of the linear parts and of the
    /// translations.
    pub fn max_entry_diff(&self, other: &AffineTransform) -> (f64, f64) {
        let ds = self
            .s
            .iter()
            .flatten()
            .zip(other.s.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let db = (self.b[0] - other.b[0])
            .abs()
            .max((self.b[1] - other.b[1]).abs());
        (ds, db)
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_singular_and_flipping() {
        assert!(AffineTransform::new([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0]).is_err());
        assert!(AffineTransform::new([[-1.0, 0.0], [0.0, 1.0]], [0.0, 0.0]).is_err());
        assert!(AffineTransform::new([[1e-7, 0.0], [0.0, 1e-7]], [0.0, 0.0]).is_err());
    }

    #[test]
    fn json_uses_capital_s() {
        let t = AffineTransform::translation(1.5, -2.0);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"S":[[1.0,0.0],[0.0,1.0]],"b":[1.5,-2.0]}"#);
        let back: AffineTransform = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<AffineTransform>(r#"{"S":[[0,0],[0,0]],"b":[0,0]}"#).is_err());
    }

    #[test]
    fn similarity_about_keeps_pivot() {
        let c = Point::new(10.0, 20.0);
        let t = AffineTransform::similarity_about(1.1, 0.3, c, [2.0, -1.0]).unwrap();
        let m = t.apply(c);
        assert!((m.x - 12.0).abs() < 1e-12 && (m.y - 19.0).abs() < 1e-12);
        assert!((t.rotation_angle() - 0.3).abs() < 1e-14);
        assert!((t.scale() - 1.1).abs() < 1e-14);
    }

    fn transform_strategy() -> impl Strategy<Value = AffineTransform> {
        (
            0.3f64..3.0,
            -3.0f64..3.0,
            -0.4f64..0.4,
            -0.4f64..0.4,
            -500.0f64..500.0,
            -500.0f64..500.0,
        )
            .prop_map(|(s, a, sh0, sh1, b0, b1)| {
                let r = AffineTransform::similarity(s, a, [b0, b1]).unwrap();
                let shear = AffineTransform::new([[1.0, sh0], [sh1 * 0.5, 1.0]], [0.0, 0.0]).unwrap();
                r.compose(&shear)
            })
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(t in transform_strategy()) {
            for m in [t.compose(&t.inverse()), t.inverse().compose(&t)] {
                let (ds, db) = m.max_entry_diff(&AffineTransform::identity());
                prop_assert!(ds < 1e-12, "ds = {ds}");
                prop_assert!(db < 1e-12, "db = {db}");
            }
        }

        #[test]
        fn compose_matches_sequential_application(
            t1 in transform_strategy(), t2 in transform_strategy(),
            x in -100.0f64..100.0, y in -100.0f64..100.0,
        ) {
            let p = Point::new(x, y);
            let a = t2.compose(&t1).apply(p);
            let b = t2.apply(t1.apply(p));
            prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        }
    }
}
