//! Planar primitives used to describe polygonal feasible sets.
//!
//! Polygons are simple, counterclockwise, open rings. Containment uses the
//! even-odd rule with an explicit boundary band whose width scales with the
//! polygon's bounding-box diagonal, so membership of points lying on an edge
//! is never decided by rounding noise.

use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative width of the boundary band (times the bounding-box diagonal).
pub const BOUNDARY_BAND: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("vertex {0} repeats its predecessor")]
    RepeatedVertex(usize),
    #[error("edges {0} and {1} intersect")]
    SelfIntersection(usize, usize),
    #[error("polygon has zero area")]
    ZeroArea,
    #[error("scale factor must be positive and finite, got {0}")]
    InvalidFactor(f64),
    #[error("subsampling target must be at least 3, got {0}")]
    InvalidTarget(usize),
    #[error("subsampled ring is not a valid polygon: {0}")]
    SubsampleFailed(Box<GeometryError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, other: Self, t: f64) -> Self {
        Self::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }

    pub fn midpoint(self, other: Self) -> Self {
        Self::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.y]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl Add for Point2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Closed segment from `p` to `q`; `p == q` is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub p: Point2,
    pub q: Point2,
}

impl Segment {
    pub const fn new(p: Point2, q: Point2) -> Self {
        Self { p, q }
    }

    pub fn at(&self, t: f64) -> Point2 {
        self.p.lerp(self.q, t)
    }

    pub fn length(&self) -> f64 {
        self.p.dist(self.q)
    }

    pub fn is_degenerate(&self) -> bool {
        self.p == self.q
    }

    pub fn reversed(&self) -> Self {
        Self::new(self.q, self.p)
    }

    /// Parameter in `[0, 1]` of the point of the segment closest to `x`.
    pub fn closest_param(&self, x: Point2) -> f64 {
        let d = self.q - self.p;
        let len2 = d.dot(d);
        if len2 == 0.0 {
            return 0.0;
        }
        ((x - self.p).dot(d) / len2).clamp(0.0, 1.0)
    }

    pub fn distance_to(&self, x: Point2) -> f64 {
        self.at(self.closest_param(x)).dist(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Inside,
    Boundary,
    Outside,
}

impl Containment {
    /// True for points of the closed region.
    pub fn is_closed_member(self) -> bool {
        !matches!(self, Containment::Outside)
    }
}

/// Simple polygon with counterclockwise vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
    lo: Point2,
    hi: Point2,
}

impl Polygon {
    /// Validates a ring and normalizes it to counterclockwise order.
    ///
    /// A trailing copy of the first vertex is dropped. Clockwise input is
    /// reversed; counterclockwise input is stored unchanged.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(GeometryError::RepeatedVertex((i + 1) % n));
            }
        }
        let area = signed_area(&vertices);
        if area == 0.0 || !area.is_finite() {
            return Err(GeometryError::ZeroArea);
        }
        check_simple(&vertices)?;
        if area < 0.0 {
            vertices.reverse();
        }
        let (lo, hi) = bounds(&vertices);
        Ok(Self { vertices, lo, hi })
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn bounding_box(&self) -> (Point2, Point2) {
        (self.lo, self.hi)
    }

    pub fn diagonal(&self) -> f64 {
        self.lo.dist(self.hi)
    }

    /// Width of the band around the boundary that classifies as `Boundary`.
    pub fn boundary_eps(&self) -> f64 {
        BOUNDARY_BAND * self.diagonal()
    }

    pub fn edge(&self, k: usize) -> Segment {
        let n = self.vertices.len();
        Segment::new(self.vertices[k % n], self.vertices[(k + 1) % n])
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        (0..self.vertices.len()).map(move |k| self.edge(k))
    }

    /// Area-weighted centroid.
    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len();
        // shift to the first vertex to limit cancellation on far-off coordinates
        let o = self.vertices[0];
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i] - o;
            let q = self.vertices[(i + 1) % n] - o;
            let w = p.cross(q);
            a2 += w;
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        Point2::new(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2))
    }

    pub fn bbox_center(&self) -> Point2 {
        Point2::new(0.5 * (self.lo.x + self.hi.x), 0.5 * (self.lo.y + self.hi.y))
    }

    /// A point strictly inside the polygon.
    ///
    /// The centroid when it is interior, otherwise the midpoint of the widest
    /// interior chord of the horizontal line through the centroid.
    pub fn interior_point(&self) -> Point2 {
        let c = self.centroid();
        if point_in_polygon(c, self) == Containment::Inside {
            return c;
        }
        let mut ys = vec![c.y];
        // fall back to lines through vertex midheights if the centroid line is degenerate
        for w in self.vertices.windows(2) {
            ys.push(0.5 * (w[0].y + w[1].y));
        }
        for y in ys {
            let mut xs: Vec<f64> = self
                .edges()
                .filter(|e| (e.p.y > y) != (e.q.y > y))
                .map(|e| e.p.x + (y - e.p.y) / (e.q.y - e.p.y) * (e.q.x - e.p.x))
                .collect();
            xs.sort_by(f64::total_cmp);
            let best = xs
                .chunks_exact(2)
                .max_by(|a, b| (a[1] - a[0]).total_cmp(&(b[1] - b[0])));
            if let Some(pair) = best {
                let m = Point2::new(0.5 * (pair[0] + pair[1]), y);
                if point_in_polygon(m, self) == Containment::Inside {
                    return m;
                }
            }
        }
        c
    }

    /// Uniform sample from the interior by rejection within the bounding box.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2 {
        loop {
            let p = Point2::new(
                rng.random_range(self.lo.x..=self.hi.x),
                rng.random_range(self.lo.y..=self.hi.y),
            );
            if point_in_polygon(p, self) == Containment::Inside {
                return p;
            }
        }
    }

    /// Closest point of the closed region to `x`.
    pub fn closest_point(&self, x: Point2) -> Point2 {
        if point_in_polygon(x, self).is_closed_member() {
            return x;
        }
        self.edges()
            .map(|e| e.at(e.closest_param(x)))
            .min_by(|a, b| a.dist(x).total_cmp(&b.dist(x)))
            .expect("polygon has edges")
    }
}

fn signed_area(v: &[Point2]) -> f64 {
    let n = v.len();
    let o = v[0];
    let mut a2 = 0.0;
    for i in 0..n {
        a2 += (v[i] - o).cross(v[(i + 1) % n] - o);
    }
    0.5 * a2
}

fn bounds(v: &[Point2]) -> (Point2, Point2) {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in v {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point2, b: Point2, c: Point2) -> bool {
    c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
}

/// Closed-segment intersection test with exact orientation signs.
fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn check_simple(v: &[Point2]) -> Result<(), GeometryError> {
    let n = v.len();
    // adjacent edges may only share their common vertex
    for i in 0..n {
        let a = v[(i + n - 1) % n];
        let b = v[i];
        let c = v[(i + 1) % n];
        if orient(a, b, c) == 0.0 && (b - a).dot(c - b) < 0.0 {
            return Err(GeometryError::SelfIntersection((i + n - 1) % n, i));
        }
    }
    let boxes: Vec<(Point2, Point2)> = (0..n).map(|i| bounds(&[v[i], v[(i + 1) % n]])).collect();
    for i in 0..n {
        let (alo, ahi) = boxes[i];
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (blo, bhi) = boxes[j];
            if alo.x > bhi.x || blo.x > ahi.x || alo.y > bhi.y || blo.y > ahi.y {
                continue;
            }
            if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return Err(GeometryError::SelfIntersection(i, j));
            }
        }
    }
    Ok(())
}

/// Even-odd containment with the polygon's default boundary band.
pub fn point_in_polygon(p: Point2, poly: &Polygon) -> Containment {
    point_in_polygon_eps(p, poly, poly.boundary_eps())
}

pub fn point_in_polygon_eps(p: Point2, poly: &Polygon, eps: f64) -> Containment {
    let (lo, hi) = poly.bounding_box();
    if p.x < lo.x - eps || p.x > hi.x + eps || p.y < lo.y - eps || p.y > hi.y + eps {
        return Containment::Outside;
    }
    let v = poly.vertices();
    let n = v.len();
    let mut inside = false;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        if Segment::new(a, b).distance_to(p) <= eps {
            return Containment::Boundary;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if x > p.x {
                inside = !inside;
            }
        }
    }
    if inside {
        Containment::Inside
    } else {
        Containment::Outside
    }
}

/// Winding number of the boundary around `p` (0 when outside).
pub fn winding_number(p: Point2, poly: &Polygon) -> i32 {
    let v = poly.vertices();
    let n = v.len();
    let mut wn = 0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        if a.y <= p.y {
            if b.y > p.y && orient(a, b, p) > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && orient(a, b, p) < 0.0 {
            wn -= 1;
        }
    }
    wn
}

pub fn polygon_edges(poly: &Polygon) -> Vec<Segment> {
    poly.edges().collect()
}

/// Maximal pieces of `seg` lying in the closed polygon, ordered along `seg`.
///
/// Isolated touching points come back as degenerate pieces.
pub fn clip_segment_to_polygon(seg: &Segment, poly: &Polygon) -> Vec<Segment> {
    let eps = poly.boundary_eps();
    if seg.is_degenerate() {
        return if point_in_polygon_eps(seg.p, poly, eps).is_closed_member() {
            vec![*seg]
        } else {
            Vec::new()
        };
    }
    let d = seg.q - seg.p;
    let len = d.norm();
    let mut ts = vec![0.0, 1.0];
    for e in poly.edges() {
        let ed = e.q - e.p;
        let denom = d.cross(ed);
        let w = e.p - seg.p;
        if denom.abs() > 1e-15 * len * ed.norm() {
            let t = w.cross(ed) / denom;
            let s = w.cross(d) / denom;
            if (0.0..=1.0).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&s) {
                ts.push(t);
            }
        }
        // vertices on or next to the segment cover collinear overlaps and grazes
        if seg.distance_to(e.p) <= eps {
            ts.push(seg.closest_param(e.p));
        }
    }
    ts.sort_by(f64::total_cmp);
    let min_gap = 1e-14;
    ts.dedup_by(|b, a| (*b - *a) * len <= min_gap * (1.0 + len));

    let member = |t: f64| point_in_polygon_eps(seg.at(t), poly, eps).is_closed_member();
    let mut pieces: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<f64> = None;
    for (idx, &t) in ts.iter().enumerate() {
        let next_in = ts.get(idx + 1).map(|&u| member(0.5 * (t + u)));
        match (open, next_in) {
            (None, Some(true)) => open = Some(t),
            (None, _) => {
                if member(t) {
                    pieces.push((t, t));
                }
            }
            (Some(start), Some(false) | None) => {
                pieces.push((start, t));
                open = None;
            }
            (Some(_), Some(true)) => {}
        }
    }
    pieces
        .into_iter()
        .map(|(a, b)| Segment::new(seg.at(a), seg.at(b)))
        .collect()
}

/// Scales every vertex about the bounding-box center: `o + factor (v - o)`.
pub fn shrink_polygon(poly: &Polygon, factor: f64) -> Result<Polygon, GeometryError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(GeometryError::InvalidFactor(factor));
    }
    let o = poly.bbox_center();
    let vertices = poly
        .vertices()
        .iter()
        .map(|v| Point2::new(o.x + factor * (v.x - o.x), o.y + factor * (v.y - o.y)))
        .collect();
    Polygon::new(vertices)
}

/// Keeps every `max(1, n / target)`-th vertex, starting with the first.
pub fn subsample_polygon(poly: &Polygon, target: usize) -> Result<Polygon, GeometryError> {
    if target < 3 {
        return Err(GeometryError::InvalidTarget(target));
    }
    let stride = subsample_stride(poly.len(), target);
    if stride == 1 {
        return Ok(poly.clone());
    }
    let kept = poly.vertices().iter().step_by(stride).copied().collect();
    Polygon::new(kept).map_err(|e| GeometryError::SubsampleFailed(Box::new(e)))
}

pub fn subsample_stride(n_vertices: usize, target: usize) -> usize {
    (n_vertices / target.max(1)).max(1)
}

/// Star-shaped polygon around `center` with `k` vertices at jittered, evenly
/// spaced angles and radii drawn from `[0.3, 1) * radius`.
pub fn random_star_polygon<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    center: Point2,
    radius: f64,
) -> Result<Polygon, GeometryError> {
    if k < 3 {
        return Err(GeometryError::TooFewVertices(k));
    }
    let step = std::f64::consts::TAU / k as f64;
    let pts = (0..k)
        .map(|i| {
            let a = (i as f64 + rng.random_range(-0.4..0.4)) * step;
            let r = radius * rng.random_range(0.3..1.0);
            Point2::new(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect();
    Polygon::new(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> Polygon {
        Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    fn l_hexagon() -> Polygon {
        Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 2.0),
            Point2::new(0.0, 2.0),
        ])
        .unwrap()
    }

    /// Star-shaped random polygon; simple by construction.
    fn random_star(rng: &mut ChaCha8Rng, k: usize) -> Polygon {
        random_star_polygon(rng, k, Point2::default(), 1.0).unwrap()
    }

    #[test]
    fn containment_examples() {
        let sq = unit_square();
        assert_eq!(
            point_in_polygon(Point2::new(0.5, 0.5), &sq),
            Containment::Inside
        );
        assert_eq!(
            point_in_polygon(Point2::new(0.0, 0.5), &sq),
            Containment::Boundary
        );
        assert_eq!(
            point_in_polygon(Point2::new(2.0, 2.0), &sq),
            Containment::Outside
        );
        assert_eq!(
            point_in_polygon(Point2::new(1.0, 1.0), &sq),
            Containment::Boundary
        );
    }

    #[test]
    fn rejects_invalid_rings() {
        assert_eq!(
            Polygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]),
            Err(GeometryError::TooFewVertices(2))
        );
        let bowtie = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(matches!(
            Polygon::new(bowtie),
            Err(GeometryError::SelfIntersection(..))
        ));
        let flat = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0),
        ];
        assert!(Polygon::new(flat).is_err());
        let nan = vec![
            Point2::new(0.0, 0.0),
            Point2::new(f64::NAN, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert_eq!(Polygon::new(nan), Err(GeometryError::NonFinite(1)));
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let cw = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(cw.area() > 0.0);
        assert_eq!(cw.area(), 1.0);
    }

    #[test]
    fn closing_duplicate_is_dropped() {
        let p = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn clip_examples() {
        let sq = unit_square();
        let pieces = clip_segment_to_polygon(
            &Segment::new(Point2::new(-1.0, 0.5), Point2::new(2.0, 0.5)),
            &sq,
        );
        assert_eq!(pieces.len(), 1);
        assert!(pieces[0].p.dist(Point2::new(0.0, 0.5)) < 1e-12);
        assert!(pieces[0].q.dist(Point2::new(1.0, 0.5)) < 1e-12);

        let none = clip_segment_to_polygon(
            &Segment::new(Point2::new(2.0, 2.0), Point2::new(3.0, 3.0)),
            &sq,
        );
        assert!(none.is_empty());
    }

    #[test]
    fn clip_degenerate_segment() {
        let sq = unit_square();
        let inside = Segment::new(Point2::new(0.3, 0.3), Point2::new(0.3, 0.3));
        assert_eq!(clip_segment_to_polygon(&inside, &sq), vec![inside]);
        let outside = Segment::new(Point2::new(3.0, 0.3), Point2::new(3.0, 0.3));
        assert!(clip_segment_to_polygon(&outside, &sq).is_empty());
    }

    #[test]
    fn clip_along_an_edge_keeps_the_overlap() {
        let sq = unit_square();
        let seg = Segment::new(Point2::new(-1.0, 0.0), Point2::new(0.5, 0.0));
        let pieces = clip_segment_to_polygon(&seg, &sq);
        assert_eq!(pieces.len(), 1);
        assert!(pieces[0].p.dist(Point2::new(0.0, 0.0)) < 1e-12);
        assert!(pieces[0].q.dist(Point2::new(0.5, 0.0)) < 1e-12);
    }

    #[test]
    fn clip_grazing_vertex_gives_point_piece() {
        let sq = unit_square();
        let seg = Segment::new(Point2::new(0.0, 2.0), Point2::new(2.0, 0.0));
        let pieces = clip_segment_to_polygon(&seg, &sq);
        assert_eq!(pieces.len(), 1);
        assert!(pieces[0].length() < 1e-9);
        assert!(pieces[0].p.dist(Point2::new(1.0, 1.0)) < 1e-12);
    }

    /// Dense-sampling oracle: classify evenly spaced points and extract runs.
    fn sampled_runs(seg: &Segment, poly: &Polygon, n: usize) -> Vec<(f64, f64)> {
        let mut runs = Vec::new();
        let mut start = None;
        let mut last = 0.0;
        for i in 0..n {
            let t = i as f64 / (n - 1) as f64;
            let inside = point_in_polygon(seg.at(t), poly).is_closed_member();
            match (start, inside) {
                (None, true) => start = Some(t),
                (Some(s), false) => {
                    runs.push((s, last));
                    start = None;
                }
                _ => {}
            }
            last = t;
        }
        if let Some(s) = start {
            runs.push((s, 1.0));
        }
        runs
    }

    #[test]
    fn clip_through_l_notch_matches_dense_sampling() {
        let l = l_hexagon();
        let seg = Segment::new(Point2::new(-0.5, 1.8), Point2::new(2.5, 0.3));
        let pieces = clip_segment_to_polygon(&seg, &l);
        let runs = sampled_runs(&seg, &l, 100_000);
        assert_eq!(pieces.len(), 2);
        assert_eq!(runs.len(), 2);
        let len = seg.length();
        for (piece, run) in pieces.iter().zip(&runs) {
            let (a, b) = (seg.at(run.0), seg.at(run.1));
            // sampling resolution is len / 1e5
            assert!(
                piece.p.dist(a) <= len / 99_999.0 + 1e-6,
                "{piece:?} vs {run:?}"
            );
            assert!(
                piece.q.dist(b) <= len / 99_999.0 + 1e-6,
                "{piece:?} vs {run:?}"
            );
        }
    }

    #[test]
    fn edges_count() {
        assert_eq!(polygon_edges(&unit_square()).len(), 4);
        let tri = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap();
        assert_eq!(polygon_edges(&tri).len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let big = random_star(&mut rng, 57);
        assert_eq!(polygon_edges(&big).len(), 57);
        let e = polygon_edges(&big);
        assert_eq!(e[56].q, e[0].p);
    }

    #[test]
    fn shrink_examples() {
        let s = shrink_polygon(&unit_square(), 0.8).unwrap();
        let expect = [(0.1, 0.1), (0.9, 0.1), (0.9, 0.9), (0.1, 0.9)];
        for (v, (x, y)) in s.vertices().iter().zip(expect) {
            assert!((v.x - x).abs() < 1e-15 && (v.y - y).abs() < 1e-15);
        }
        let tri = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(0.0, 4.0),
        ])
        .unwrap();
        let t = shrink_polygon(&tri, 0.5).unwrap();
        assert_eq!(
            t.vertices(),
            &[
                Point2::new(1.0, 1.0),
                Point2::new(3.0, 1.0),
                Point2::new(1.0, 3.0)
            ]
        );
        assert_eq!(shrink_polygon(&l_hexagon(), 1.0).unwrap(), l_hexagon());
        assert_eq!(
            shrink_polygon(&tri, 0.0),
            Err(GeometryError::InvalidFactor(0.0))
        );
        assert!(shrink_polygon(&tri, -1.0).is_err());
    }

    #[test]
    fn subsample_examples() {
        let twelve: Vec<Point2> = (0..12)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 12.0;
                Point2::new(a.cos(), a.sin())
            })
            .collect();
        let poly = Polygon::new(twelve.clone()).unwrap();
        let six = subsample_polygon(&poly, 6).unwrap();
        assert_eq!(six.len(), 6);
        for (k, v) in six.vertices().iter().enumerate() {
            assert_eq!(*v, twelve[2 * k]);
        }
        assert_eq!(subsample_polygon(&poly, 12).unwrap(), poly);
        assert_eq!(subsample_polygon(&poly, 500).unwrap(), poly);
        assert_eq!(
            subsample_polygon(&poly, 2),
            Err(GeometryError::InvalidTarget(2))
        );
        assert_eq!(subsample_stride(5691, 50), 113);
        assert_eq!(5691usize.div_ceil(113), 51);
    }

    #[test]
    fn subsample_reports_degenerate_result() {
        // keeping vertices 0, 2, 4 of this hexagon yields a collinear ring
        let poly = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, -1.0),
            Point2::new(2.0, 0.0),
            Point2::new(3.0, 1.0),
            Point2::new(4.0, 0.0),
            Point2::new(2.0, 5.0),
        ])
        .unwrap();
        assert!(matches!(
            subsample_polygon(&poly, 3),
            Err(GeometryError::SubsampleFailed(_))
        ));
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(unit_square().centroid(), Point2::new(0.5, 0.5));
        let tri = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(3.0, 0.0),
            Point2::new(0.0, 3.0),
        ])
        .unwrap();
        let c = tri.centroid();
        assert!((c.x - 1.0).abs() < 1e-15 && (c.y - 1.0).abs() < 1e-15);
        let (lo, hi) = tri.bounding_box();
        assert_eq!((lo, hi), (Point2::new(0.0, 0.0), Point2::new(3.0, 3.0)));
    }

    #[test]
    fn centroid_matches_monte_carlo_on_l_shape() {
        let l = l_hexagon();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for _ in 0..1_000_000 {
            let p = Point2::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
            if point_in_polygon(p, &l) == Containment::Inside {
                sx += p.x;
                sy += p.y;
                n += 1;
            }
        }
        let c = l.centroid();
        assert!((c.x - sx / n as f64).abs() < 1e-3);
        assert!((c.y - sy / n as f64).abs() < 1e-3);
        // analytic: mean of the three unit-cell centers
        assert!((c.x - 5.0 / 6.0).abs() < 1e-12 && (c.y - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn interior_point_of_nonconvex_polygon() {
        // C-shape whose centroid lies in the notch
        let c = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(3.0, 0.0),
            Point2::new(3.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 2.0),
            Point2::new(3.0, 2.0),
            Point2::new(3.0, 3.0),
            Point2::new(0.0, 3.0),
        ])
        .unwrap();
        assert_ne!(point_in_polygon(c.centroid(), &c), Containment::Inside);
        assert_eq!(
            point_in_polygon(c.interior_point(), &c),
            Containment::Inside
        );
    }

    #[test]
    fn even_odd_agrees_with_winding_number() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let k = rng.random_range(5..40);
            let poly = random_star(&mut rng, k);
            for _ in 0..10_000 {
                let p = Point2::new(rng.random_range(-1.1..1.1), rng.random_range(-1.1..1.1));
                let c = point_in_polygon(p, &poly);
                let wn = winding_number(p, &poly);
                match c {
                    Containment::Inside => assert_eq!(wn, 1),
                    Containment::Outside => assert_eq!(wn, 0),
                    Containment::Boundary => {}
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn clipped_pieces_and_gaps_classify_correctly(
            seed in 0u64..1000,
            ax in -1.5f64..1.5, ay in -1.5f64..1.5,
            bx in -1.5f64..1.5, by in -1.5f64..1.5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let poly = random_star(&mut rng, 14);
            let seg = Segment::new(Point2::new(ax, ay), Point2::new(bx, by));
            let pieces = clip_segment_to_polygon(&seg, &poly);
            for piece in &pieces {
                let m = piece.p.midpoint(piece.q);
                prop_assert!(point_in_polygon(m, &poly).is_closed_member());
            }
            for w in pieces.windows(2) {
                let m = w[0].q.midpoint(w[1].p);
                if w[0].q.dist(w[1].p) > 1e-9 {
                    prop_assert_eq!(point_in_polygon(m, &poly), Containment::Outside);
                }
            }
            // reversal gives the same point set
            let rev = clip_segment_to_polygon(&seg.reversed(), &poly);
            prop_assert_eq!(rev.len(), pieces.len());
            for (a, b) in pieces.iter().zip(rev.iter().rev()) {
                prop_assert!(a.p.dist(b.q) < 1e-9 && a.q.dist(b.p) < 1e-9);
            }
        }

        #[test]
        fn shrink_then_expand_recovers_vertices(seed in 0u64..1000, f in 0.1f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let poly = random_star(&mut rng, 12);
            let back = shrink_polygon(&shrink_polygon(&poly, f).unwrap(), 1.0 / f).unwrap();
            for (a, b) in poly.vertices().iter().zip(back.vertices()) {
                prop_assert!(a.dist(*b) <= 1e-12 * (1.0 + a.norm()) / f);
            }
        }
    }
}
