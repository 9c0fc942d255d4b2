//! Small planar-geometry toolkit: projective transforms between camera
//! pixels and the road plane, polygons, and oriented rectangles.

use nalgebra::Matrix3;

use crate::error::{Error, Result};

const MIN_DET: f64 = 1e-9;

/// 3x3 projective transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub m: Matrix3<f64>,
}

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let det = m.determinant();
        if det.abs() <= MIN_DET {
            return Err(Error::SingularHomography(det.abs()));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            m: self.m.try_inverse().expect("invertible by construction"),
        }
    }

    /// Apply to a point; returns None when the point maps to infinity.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let m = &self.m;
        let w = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
        if w.abs() < 1e-12 {
            return None;
        }
        Some((
            (m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)]) / w,
            (m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)]) / w,
        ))
    }

    pub fn compose(&self, inner: &Homography) -> Self {
        Self {
            m: self.m * inner.m,
        }
    }
}

/// Simple polygon, tested with the even-odd rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            vertices: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let [xi, yi] = self.vertices[i];
            let [xj, yj] = self.vertices[j];
            if (yi > y) != (yj > y) {
                let x_cross = xi + (y - yi) / (yj - yi) * (xj - xi);
                if x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }
}

/// Rectangle with an arbitrary long-axis direction. `origin` is the pivot
/// corner; the rectangle spans `[0, length]` along `axis` and `[0, width]`
/// along the right-hand perpendicular.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub origin: [f64; 2],
    /// Unit vector of the long axis.
    pub axis: [f64; 2],
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    /// Perpendicular of the axis (rotated -90 deg: for an axis pointing
    /// "forward" this points to the right when y is forward and x is right).
    #[inline]
    pub fn perp(&self) -> [f64; 2] {
        [self.axis[1], -self.axis[0]]
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.origin[0];
        let dy = y - self.origin[1];
        let t = dx * self.axis[0] + dy * self.axis[1];
        if t < 0.0 || t > self.length {
            return false;
        }
        let p = self.perp();
        let s = dx * p[0] + dy * p[1];
        (0.0..=self.width).contains(&s)
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let p = self.perp();
        let o = self.origin;
        let a = [o[0] + self.axis[0] * self.length, o[1] + self.axis[1] * self.length];
        [
            o,
            a,
            [a[0] + p[0] * self.width, a[1] + p[1] * self.width],
            [o[0] + p[0] * self.width, o[1] + p[1] * self.width],
        ]
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon {
            vertices: self.corners().to_vec(),
        }
    }

    /// Axis-aligned polygon grown by `margin` around this rectangle.
    pub fn dilated_bbox(&self, margin: f64) -> Polygon {
        let (lo, hi) = self.to_polygon().bbox();
        Polygon::rect(lo[0] - margin, lo[1] - margin, hi[0] + margin, hi[1] + margin)
    }
}

/// Planar pose: position plus heading, heading 0 facing +y, positive toward +x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading_rad: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading_rad: f64) -> Self {
        Self { x, y, heading_rad }
    }

    #[inline]
    pub fn forward(&self) -> [f64; 2] {
        [self.heading_rad.sin(), self.heading_rad.cos()]
    }

    #[inline]
    pub fn right(&self) -> [f64; 2] {
        [self.heading_rad.cos(), -self.heading_rad.sin()]
    }

    /// Local (lateral-right, forward) offsets to the world frame.
    #[inline]
    pub fn local_to_world(&self, lateral: f64, forward: f64) -> [f64; 2] {
        let f = self.forward();
        let r = self.right();
        [
            self.x + r[0] * lateral + f[0] * forward,
            self.y + r[1] * lateral + f[1] * forward,
        ]
    }

    #[inline]
    pub fn world_to_local(&self, x: f64, y: f64) -> [f64; 2] {
        let dx = x - self.x;
        let dy = y - self.y;
        let f = self.forward();
        let r = self.right();
        [dx * r[0] + dy * r[1], dx * f[0] + dy * f[1]]
    }
}

pub fn normalize_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homography_rejects_singular() {
        assert!(Homography::new(Matrix3::zeros()).is_err());
    }

    #[test]
    fn homography_round_trip() {
        let h = Homography::new(Matrix3::new(2.0, 0.1, 3.0, 0.0, 1.5, -2.0, 0.001, 0.0, 1.0))
            .unwrap();
        let inv = h.inverse();
        let (x, y) = h.apply(10.0, 20.0).unwrap();
        let (bx, by) = inv.apply(x, y).unwrap();
        assert!((bx - 10.0).abs() < 1e-9 && (by - 20.0).abs() < 1e-9);
    }

    #[test]
    fn polygon_contains() {
        let p = Polygon::rect(0.0, 0.0, 2.0, 1.0);
        assert!(p.contains(1.0, 0.5));
        assert!(!p.contains(3.0, 0.5));
        assert!(!p.contains(1.0, -0.1));
    }

    #[test]
    fn oriented_rect_axis_aligned() {
        let r = OrientedRect {
            origin: [1.0, 2.0],
            axis: [0.0, 1.0],
            length: 5.0,
            width: 0.5,
        };
        assert!(r.contains(1.2, 4.0));
        assert!(!r.contains(0.9, 4.0)); // left of pivot edge
        assert!(r.contains(1.5, 7.0));
        assert!(!r.contains(1.2, 7.1));
    }

    #[test]
    fn oriented_rect_rotated() {
        let b = 30f64.to_radians();
        let r = OrientedRect {
            origin: [0.0, 0.0],
            axis: [b.sin(), b.cos()],
            length: 10.0,
            width: 1.0,
        };
        // A point along the axis is inside; far off-axis is not.
        assert!(r.contains(5.0 * b.sin() + 0.2 * b.cos(), 5.0 * b.cos() - 0.2 * b.sin()));
        assert!(!r.contains(-2.0, 5.0));
    }

    #[test]
    fn pose_round_trip() {
        let pose = Pose::new(3.0, -1.0, 0.4);
        let w = pose.local_to_world(0.7, 2.0);
        let l = pose.world_to_local(w[0], w[1]);
        assert!((l[0] - 0.7).abs() < 1e-12 && (l[1] - 2.0).abs() < 1e-12);
    }
}
