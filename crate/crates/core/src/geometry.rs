//! Planar poses and the small amount of 2D geometry shared across modules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wrap an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    // rem_euclid maps -pi to pi already; guard the exact lower bound anyway.
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[inline]
pub fn rotate(x: f64, y: f64, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (c * x - s * y, s * x + c * y)
}

/// Position and heading in the scene frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    /// Express a scene-frame point in this pose's local frame.
    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let (x, y) = rotate(p[0] - self.x, p[1] - self.y, -self.heading);
        [x, y]
    }

    /// Map a point from this pose's local frame into the scene frame.
    pub fn to_scene(&self, p: [f64; 2]) -> [f64; 2] {
        let (x, y) = rotate(p[0], p[1], self.heading);
        [self.x + x, self.y + y]
    }
}

/// Rigid planar transform applied to scene-frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se2 {
    pub tx: f64,
    pub ty: f64,
    pub theta: f64,
}

impl Se2 {
    pub fn new(tx: f64, ty: f64, theta: f64) -> Self {
        Self { tx, ty, theta }
    }

    pub fn apply_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (x, y) = rotate(p[0], p[1], self.theta);
        [x + self.tx, y + self.ty]
    }

    pub fn apply_vector(&self, v: [f64; 2]) -> [f64; 2] {
        let (x, y) = rotate(v[0], v[1], self.theta);
        [x, y]
    }

    pub fn apply_pose(&self, p: &Pose2) -> Pose2 {
        let [x, y] = self.apply_point([p.x, p.y]);
        Pose2::new(x, y, p.heading + self.theta)
    }
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Total length of a polyline.
pub fn polyline_length(pts: &[[f64; 2]]) -> f64 {
    pts.windows(2).map(|w| dist(w[0], w[1])).sum()
}

/// Point and tangent heading at arc length `s` along a polyline (clamped to its ends).
pub fn polyline_at(pts: &[[f64; 2]], s: f64) -> Pose2 {
    assert!(!pts.is_empty(), "empty polyline");
    if pts.len() == 1 {
        return Pose2::new(pts[0][0], pts[0][1], 0.0);
    }
    let mut remaining = s.max(0.0);
    let last = pts.len() - 2;
    for (i, w) in pts.windows(2).enumerate() {
        let seg = dist(w[0], w[1]);
        if remaining <= seg || i == last {
            let t = if seg > 0.0 { (remaining / seg).min(1.0) } else { 0.0 };
            let x = w[0][0] + t * (w[1][0] - w[0][0]);
            let y = w[0][1] + t * (w[1][1] - w[0][1]);
            let h = (w[1][1] - w[0][1]).atan2(w[1][0] - w[0][0]);
            return Pose2::new(x, y, h);
        }
        remaining -= seg;
    }
    unreachable!()
}

/// Squared distance from `p` to segment `ab`.
pub fn point_segment_dist2(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    qx * qx + qy * qy
}

pub fn point_polyline_dist(p: [f64; 2], pts: &[[f64; 2]]) -> f64 {
    match pts.len() {
        0 => f64::INFINITY,
        1 => dist(p, pts[0]),
        _ => pts
            .windows(2)
            .map(|w| point_segment_dist2(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
            .sqrt(),
    }
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > p[1]) != (yj > p[1]) && p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Distance from `p` to the closed boundary of `poly`.
pub fn polygon_boundary_dist(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n == 0 {
        return f64::INFINITY;
    }
    (0..n)
        .map(|i| point_segment_dist2(p, poly[i], poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        for k in -20..20 {
            let a = normalize_angle(k as f64 * 0.77);
            assert!(a > -PI && a <= PI);
        }
    }

    #[test]
    fn local_scene_roundtrip() {
        let p = Pose2::new(3.0, -2.0, 0.7);
        let q = [5.5, 1.25];
        let back = p.to_scene(p.to_local(q));
        assert!(dist(back, q) < 1e-12);
    }

    #[test]
    fn polyline_sampling() {
        let pts = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]];
        assert_eq!(polyline_length(&pts), 20.0);
        let m = polyline_at(&pts, 15.0);
        assert!((m.x - 10.0).abs() < 1e-12 && (m.y - 5.0).abs() < 1e-12);
        assert!((m.heading - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn square_contains() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(point_in_polygon([0.5, 0.5], &sq));
        assert!(!point_in_polygon([1.5, 0.5], &sq));
        assert!((polygon_boundary_dist([0.5, 1.05], &sq) - 0.05).abs() < 1e-12);
    }
}
