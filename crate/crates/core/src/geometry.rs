//! Planar geometry helpers shared by simulation, planning and metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use glam::DVec2 as Vec2;

/// Axis-aligned rectangle, inclusive on all sides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::input("rectangle corners must be finite"));
        }
        if min.x >= max.x || min.y >= max.y {
            return Err(Error::input(format!(
                "rectangle min {min} must be strictly below max {max}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// A simple (non-self-intersecting) polygon. Orientation is normalized to
/// counter-clockwise on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

impl Polygon {
    pub fn new(mut vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() >= 2 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::input("polygon needs at least 3 distinct vertices"));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("polygon vertices must be finite"));
        }
        let area = signed_area(&vertices);
        if area.abs() < 1e-12 {
            return Err(Error::input("polygon is degenerate (zero area)"));
        }
        let n = vertices.len();
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            if a.distance_squared(b) == 0.0 {
                return Err(Error::input("polygon has repeated consecutive vertices"));
            }
            for j in (i + 1)..n {
                // adjacent edges share a vertex; skip them
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(Error::input("polygon is self-intersecting"));
                }
            }
        }
        if area < 0.0 {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle as a polygon.
    pub fn rectangle(min: Vec2, max: Vec2) -> Result<Self> {
        Self::new(vec![
            min,
            Vec2::new(max.x, min.y),
            max,
            Vec2::new(min.x, max.y),
        ])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn centroid(&self) -> Vec2 {
        let a = signed_area(&self.vertices);
        let mut c = Vec2::ZERO;
        for (p, q) in self.edges() {
            let cross = p.perp_dot(q);
            c += (p + q) * cross;
        }
        c / (6.0 * a)
    }

    pub fn bounding_box(&self) -> Rect {
        let mut min = Vec2::splat(f64::INFINITY);
        let mut max = Vec2::splat(f64::NEG_INFINITY);
        for v in &self.vertices {
            min = min.min(*v);
            max = max.max(*v);
        }
        Rect { min, max }
    }

    /// Strict containment: points on the boundary are outside.
    pub fn contains_strict(&self, p: Vec2) -> bool {
        if self.boundary_distance(p) <= 1e-12 {
            return false;
        }
        self.crossing_parity(p)
    }

    /// Inclusive containment: boundary points count as inside.
    pub fn contains_inclusive(&self, p: Vec2) -> bool {
        self.boundary_distance(p) <= 1e-12 || self.crossing_parity(p)
    }

    fn crossing_parity(&self, p: Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn closest_boundary_point(&self, p: Vec2) -> Vec2 {
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for (a, b) in self.edges() {
            let q = closest_point_on_segment(p, a, b);
            let d = q.distance_squared(p);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        self.closest_boundary_point(p).distance(p)
    }

    /// Distance from `p` to the filled polygon (zero inside).
    pub fn distance(&self, p: Vec2) -> f64 {
        if self.crossing_parity(p) {
            0.0
        } else {
            self.boundary_distance(p)
        }
    }

    /// Distance from segment `ab` to the filled polygon (zero when they touch
    /// or overlap).
    pub fn segment_distance(&self, a: Vec2, b: Vec2) -> f64 {
        if self.crossing_parity(a) || self.crossing_parity(b) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for (c, d) in self.edges() {
            best = best.min(segment_segment_distance(a, b, c, d));
            if best == 0.0 {
                break;
            }
        }
        best
    }

    /// First intersection of the ray `origin + t·dir` (t ≥ 0) with the
    /// boundary, as the parameter `t`.
    pub fn ray_entry(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (a, b) in self.edges() {
            let e = b - a;
            let denom = dir.perp_dot(e);
            if denom.abs() < 1e-15 {
                continue;
            }
            let w = a - origin;
            let t = w.perp_dot(e) / denom;
            let u = w.perp_dot(dir) / denom;
            if t >= 0.0 && (0.0..=1.0).contains(&u) && best.is_none_or(|bt| t < bt) {
                best = Some(t);
            }
        }
        best
    }

    pub fn translated(&self, offset: Vec2) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| *v + offset).collect(),
        }
    }

    pub fn rotated(&self, angle: f64) -> Self {
        let rot = Vec2::from_angle(angle);
        Self {
            vertices: self.vertices.iter().map(|v| rot.rotate(*v)).collect(),
        }
    }
}

pub fn signed_area(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| vertices[i].perp_dot(vertices[(i + 1) % n]))
        .sum::<f64>()
        * 0.5
}

pub fn closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len_sq = ab.length_squared();
    if len_sq == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    closest_point_on_segment(p, a, b).distance(p)
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).perp_dot(c - a)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Vec2, q: Vec2, r: Vec2, o: f64| {
        o == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

pub fn segment_segment_distance(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Unit vector or zero for (near-)zero input.
pub fn unit_or_zero(v: Vec2) -> Vec2 {
    let len = v.length();
    if len > 1e-12 {
        v / len
    } else {
        Vec2::ZERO
    }
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    } else if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    a
}
