//! Planar geometry: points, segment projection, convex polygons and
//! waypoint paths whose corners are rounded with circular arcs.
//!
//! Headings use the math convention everywhere: 0 along +x, CCW positive.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `psi`.
    pub fn from_heading(psi: f64) -> Self {
        Self::new(psi.cos(), psi.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn heading(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn perp_left(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wrap an angle into (−π, π].
/// Angles already in range come back bit-identical.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub dist: f64,
    /// Normalized position along the segment, clamped to [0, 1].
    pub t: f64,
    pub point: Vec2,
}

/// Closest point on the segment `a`–`b` (endpoint-clamped).
pub fn project_onto_segment(p: Vec2, a: Vec2, b: Vec2) -> Projection {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let point = a + ab * t;
    Projection {
        dist: p.dist(point),
        t,
        point,
    }
}

/// Nearest segment of a polyline. Ties go to the lowest segment index.
pub fn nearest_on_polyline(p: Vec2, pts: &[Vec2]) -> Option<(usize, Projection)> {
    let mut best: Option<(usize, Projection)> = None;
    for (i, w) in pts.windows(2).enumerate() {
        let pr = project_onto_segment(p, w[0], w[1]);
        if best.is_none_or(|(_, b)| pr.dist < b.dist) {
            best = Some((i, pr));
        }
    }
    best
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon vertex {0} is not finite")]
    NonFinite(usize),
    #[error("polygon is not strictly convex at vertex {0}")]
    NotConvex(usize),
    #[error("polygon winds more than once")]
    SelfIntersecting,
}

/// Strictly convex polygon, stored in the winding order it was given.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
    #[serde(skip)]
    orientation: f64,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        let mut sign = 0.0;
        let mut turning = 0.0;
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let e1 = b - a;
            let e2 = c - b;
            let cr = e1.cross(e2);
            if cr == 0.0 || (sign != 0.0 && cr.signum() != sign) {
                return Err(GeometryError::NotConvex((i + 1) % n));
            }
            sign = cr.signum();
            turning += e1.cross(e2).atan2(e1.dot(e2));
        }
        if (turning.abs() - 2.0 * PI).abs() > 1e-6 {
            return Err(GeometryError::SelfIntersecting);
        }
        Ok(Self {
            vertices,
            orientation: sign,
        })
    }

    /// Axis-aligned rectangle, counter-clockwise.
    pub fn rectangle(min: Vec2, max: Vec2) -> Result<Self, GeometryError> {
        Self::new(vec![min, Vec2::new(max.x, min.y), max, Vec2::new(min.x, max.y)])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Inside or on the boundary.
    pub fn contains(&self, p: Vec2) -> bool {
        self.edges()
            .all(|(a, b)| (b - a).cross(p - a) * self.orientation >= 0.0)
    }

    /// Unsigned distance to the nearest edge.
    pub fn edge_distance(&self, p: Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| project_onto_segment(p, a, b).dist)
            .fold(f64::INFINITY, f64::min)
    }

    /// Area centroid.
    pub fn centroid(&self) -> Vec2 {
        let mut a2 = 0.0;
        let mut c = Vec2::ZERO;
        for (p, q) in self.edges() {
            let w = p.cross(q);
            a2 += w;
            c = c + (p + q) * w;
        }
        c * (1.0 / (3.0 * a2))
    }
}

impl<'de> Deserialize<'de> for ConvexPolygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            vertices: Vec<Vec2>,
        }
        let raw = Raw::deserialize(d)?;
        ConvexPolygon::new(raw.vertices).map_err(serde::de::Error::custom)
    }
}

/// Circular arc. `sweep` is signed: positive turns left (CCW about the center).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub center: Vec2,
    pub radius: f64,
    pub theta_start: f64,
    pub sweep: f64,
}

impl Arc {
    pub fn point_at(&self, theta: f64) -> Vec2 {
        self.center + Vec2::from_heading(theta) * self.radius
    }

    pub fn start(&self) -> Vec2 {
        self.point_at(self.theta_start)
    }

    pub fn end(&self) -> Vec2 {
        self.point_at(self.theta_start + self.sweep)
    }

    pub fn length(&self) -> f64 {
        self.radius * self.sweep.abs()
    }

    /// Sample angles every `dtheta` from the start, plus the exact end.
    ///
    /// Halving `dtheta` yields a superset of the previous samples.
    pub fn sample_angles(&self, dtheta: f64) -> Vec<f64> {
        let span = self.sweep.abs();
        let s = self.sweep.signum();
        let mut out = Vec::new();
        let mut i = 0u64;
        loop {
            let off = i as f64 * dtheta;
            if off >= span {
                break;
            }
            out.push(self.theta_start + s * off);
            i += 1;
        }
        out.push(self.theta_start + self.sweep);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathElement {
    Line { a: Vec2, b: Vec2, segment: usize },
    Arc { arc: Arc, corner: usize, segment: usize },
}

impl PathElement {
    pub fn segment(&self) -> usize {
        match *self {
            PathElement::Line { segment, .. } | PathElement::Arc { segment, .. } => segment,
        }
    }

    pub fn length(&self) -> f64 {
        match self {
            PathElement::Line { a, b, .. } => a.dist(*b),
            PathElement::Arc { arc, .. } => arc.length(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilletError {
    #[error("path needs at least 2 waypoints")]
    TooFewWaypoints,
    #[error("waypoints {0} and {1} coincide")]
    Coincident(usize, usize),
    #[error("waypoint {0} reverses direction")]
    Reversal(usize),
    #[error("turn radius {radius} at waypoint {corner} is not positive")]
    BadRadius { corner: usize, radius: f64 },
    #[error("segment {segment} is {length:.3} m but its turns need {needed:.3} m")]
    TurnDoesNotFit { segment: usize, length: f64, needed: f64 },
}

/// Waypoint polyline with each interior corner replaced by a tangent arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilletPath {
    pub elements: Vec<PathElement>,
}

impl FilletPath {
    /// `corner_radius(k)` gives the turn radius at interior waypoint `k`.
    pub fn build(waypoints: &[Vec2], corner_radius: impl Fn(usize) -> f64) -> Result<Self, FilletError> {
        let n = waypoints.len();
        if n < 2 {
            return Err(FilletError::TooFewWaypoints);
        }
        let mut dirs = Vec::with_capacity(n - 1);
        let mut lens = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let d = waypoints[k + 1] - waypoints[k];
            let unit = d.normalized().ok_or(FilletError::Coincident(k, k + 1))?;
            dirs.push(unit);
            lens.push(d.norm());
        }
        // turn angle and tangent length per corner (index = waypoint index)
        let mut turns = vec![(0.0, 0.0, 0.0); n];
        for k in 1..n - 1 {
            let (din, dout) = (dirs[k - 1], dirs[k]);
            let delta = din.cross(dout).atan2(din.dot(dout));
            if delta.abs() < 1e-12 {
                continue;
            }
            if delta.abs() > PI - 1e-6 {
                return Err(FilletError::Reversal(k));
            }
            let r = corner_radius(k);
            if !(r > 0.0 && r.is_finite()) {
                return Err(FilletError::BadRadius { corner: k, radius: r });
            }
            turns[k] = (delta, r, r * (delta.abs() / 2.0).tan());
        }
        for k in 0..n - 1 {
            let needed = turns[k].2 + turns[k + 1].2;
            if needed > lens[k] + 1e-9 {
                return Err(FilletError::TurnDoesNotFit {
                    segment: k,
                    length: lens[k],
                    needed,
                });
            }
        }
        let mut elements = Vec::new();
        let mut cursor = waypoints[0];
        for k in 1..n - 1 {
            let (delta, r, t) = turns[k];
            if t == 0.0 {
                continue;
            }
            let (din, dout) = (dirs[k - 1], dirs[k]);
            let t1 = waypoints[k] - din * t;
            let t2 = waypoints[k] + dout * t;
            if cursor.dist(t1) > 0.0 {
                elements.push(PathElement::Line {
                    a: cursor,
                    b: t1,
                    segment: k - 1,
                });
            }
            let center = t1 + din.perp_left() * (r * delta.signum());
            elements.push(PathElement::Arc {
                arc: Arc {
                    center,
                    radius: r,
                    theta_start: (t1 - center).heading(),
                    sweep: delta,
                },
                corner: k,
                segment: k,
            });
            cursor = t2;
        }
        let last = waypoints[n - 1];
        if cursor.dist(last) > 0.0 {
            elements.push(PathElement::Line {
                a: cursor,
                b: last,
                segment: n - 2,
            });
        }
        Ok(Self { elements })
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, &Arc)> {
        self.elements.iter().filter_map(|e| match e {
            PathElement::Arc { arc, corner, .. } => Some((*corner, arc)),
            _ => None,
        })
    }

    pub fn length(&self) -> f64 {
        self.elements.iter().map(PathElement::length).sum()
    }

    /// Points along the path no more than `spacing` apart, each tagged with
    /// the waypoint segment it belongs to. Element endpoints are included.
    pub fn densify(&self, spacing: f64) -> Vec<(Vec2, usize)> {
        let mut out: Vec<(Vec2, usize)> = Vec::new();
        for e in &self.elements {
            let n = (e.length() / spacing).ceil().max(1.0) as usize;
            let seg = e.segment();
            let start_i = if out.is_empty() { 0 } else { 1 };
            for i in start_i..=n {
                let f = i as f64 / n as f64;
                let p = match e {
                    PathElement::Line { a, b, .. } => a.lerp(*b, f),
                    PathElement::Arc { arc, .. } => arc.point_at(arc.theta_start + arc.sweep * f),
                };
                out.push((p, seg));
            }
        }
        out
    }
}
