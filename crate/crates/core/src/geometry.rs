//! Planar primitives used by the scene renderer.
//!
//! The world frame has the street running along the x-axis. The receiver and
//! the LiDAR sit at the origin and the transmitter sits on the +y axis, so the
//! line-of-sight link is the segment from the origin to `(0, tx_distance)`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment2D {
    pub a: Point2,
    pub b: Point2,
}

impl Segment2D {
    pub const fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }
}

/// Axis-aligned rectangle, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn centered(cx: f64, cy: f64, length: f64, width: f64) -> Self {
        Self {
            min_x: cx - length / 2.0,
            max_x: cx + length / 2.0,
            min_y: cy - width / 2.0,
            max_y: cy + width / 2.0,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    /// Closed segment/rectangle intersection (Liang-Barsky clipping).
    ///
    /// Touching an edge or a corner counts as an intersection.
    pub fn intersects_segment(&self, seg: &Segment2D) -> bool {
        let dx = seg.b.x - seg.a.x;
        let dy = seg.b.y - seg.a.y;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        let checks = [
            (-dx, seg.a.x - self.min_x),
            (dx, self.max_x - seg.a.x),
            (-dy, seg.a.y - self.min_y),
            (dy, self.max_y - seg.a.y),
        ];
        for (p, q) in checks {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
                continue;
            }
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return false;
                }
                t0 = t0.max(r);
            } else {
                if r < t0 {
                    return false;
                }
                t1 = t1.min(r);
            }
        }
        t0 <= t1
    }

    /// Distance along a ray from `origin` (unit direction `dir`) to the first
    /// boundary point of the rectangle, if any.
    pub fn ray_hit(&self, origin: Point2, dir: Point2) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for (o, d, lo, hi) in [
            (origin.x, dir.x, self.min_x, self.max_x),
            (origin.y, dir.y, self.min_y, self.max_y),
        ] {
            if d == 0.0 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let (mut ta, mut tb) = ((lo - o) / d, (hi - o) / d);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t_near = t_near.max(ta);
                t_far = t_far.min(tb);
            }
        }
        if t_near > t_far || t_far < 0.0 {
            return None;
        }
        Some(t_near.max(0.0))
    }
}

/// Distance along a ray to a segment, if the ray hits it.
pub fn ray_segment_hit(origin: Point2, dir: Point2, seg: &Segment2D) -> Option<f64> {
    let ex = seg.b.x - seg.a.x;
    let ey = seg.b.y - seg.a.y;
    let denom = dir.x * ey - dir.y * ex;
    if denom.abs() < 1e-15 {
        return None;
    }
    let wx = seg.a.x - origin.x;
    let wy = seg.a.y - origin.y;
    let t = (wx * ey - wy * ex) / denom;
    let u = (wx * dir.y - wy * dir.x) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}
