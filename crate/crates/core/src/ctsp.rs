//! Continuous traveling salesman over polygons: choose one point in each
//! polygon so that the closed tour through them, in a given order, is as
//! short as possible.
//!
//! With the order fixed, every city is a two-dimensional block whose
//! objective is `|a - x| + |x - b|` for the tour neighbors `a` and `b`. Its
//! global minimizer over a polygon lies on `[a, b]` clipped to the polygon
//! or on an edge, and the objective is convex along each of those segments,
//! so sampling them with successive zooms is a reliable global oracle.

use log::debug;
use thiserror::Error;

use crate::bcd::{run_bcd, BcdConfig, BcdError, BcdOutcome, BlockProblem, BlockTrial, Certificate};
use crate::covering::{estimate_multipliers, QuadraticModel, SmoothInequality};
use crate::geometry::{
    clip_segment_to_polygon, point_in_polygon, Containment, Point2, Polygon, Segment,
};

/// Distance below which two tour points count as coincident.
pub const COINCIDE_EPS: f64 = 1e-12;

/// Relative width of the band in which two block values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtspError {
    #[error("an instance needs at least 2 polygons, got {0}")]
    TooFewPolygons(usize),
    #[error("invalid permutation: {0}")]
    BadPermutation(String),
    #[error("expected {expected} points, got {got}")]
    PointCount { expected: usize, got: usize },
    #[error("city {city} coincides with a tour neighbor")]
    Coincident { city: usize },
    #[error("point of city {city} lies outside its polygon")]
    Infeasible { city: usize },
    #[error(transparent)]
    Bcd(#[from] BcdError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    polygons: Vec<Polygon>,
}

impl Instance {
    pub fn new(name: impl Into<String>, polygons: Vec<Polygon>) -> Result<Self, CtspError> {
        if polygons.len() < 2 {
            return Err(CtspError::TooFewPolygons(polygons.len()));
        }
        Ok(Self {
            name: name.into(),
            polygons,
        })
    }

    pub fn polygons(&self) -> &[Polygon] {
        &self.polygons
    }

    pub fn polygon(&self, city: usize) -> &Polygon {
        &self.polygons[city]
    }

    pub fn len(&self) -> usize {
        self.polygons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    pub fn centroids(&self) -> Vec<Point2> {
        self.polygons.iter().map(Polygon::centroid).collect()
    }
}

/// Visiting order (0-based city indices) and one point per city, indexed by
/// city.
#[derive(Debug, Clone, PartialEq)]
pub struct Tour {
    pub perm: Vec<usize>,
    pub points: Vec<Point2>,
}

impl Tour {
    pub fn new(perm: Vec<usize>, points: Vec<Point2>) -> Result<Self, CtspError> {
        check_permutation(&perm, points.len())?;
        if perm.len() != points.len() {
            return Err(CtspError::PointCount {
                expected: perm.len(),
                got: points.len(),
            });
        }
        Ok(Self { perm, points })
    }

    /// Every point lies in the closure of its polygon.
    pub fn is_feasible(&self, instance: &Instance) -> bool {
        self.points
            .iter()
            .zip(instance.polygons())
            .all(|(x, poly)| point_in_polygon(*x, poly).is_closed_member())
    }
}

/// Checks that `perm` lists distinct cities below `n`, at least two of them.
pub fn check_permutation(perm: &[usize], n: usize) -> Result<(), CtspError> {
    if perm.len() < 2 {
        return Err(CtspError::BadPermutation(format!(
            "needs at least 2 cities, got {}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &c in perm {
        if c >= n {
            return Err(CtspError::BadPermutation(format!(
                "city {} out of range",
                c + 1
            )));
        }
        if seen[c] {
            return Err(CtspError::BadPermutation(format!(
                "city {} repeated",
                c + 1
            )));
        }
        seen[c] = true;
    }
    Ok(())
}

/// Closed tour length through `points[perm[0]], points[perm[1]], ...`.
pub fn route_length_of(perm: &[usize], points: &[Point2]) -> f64 {
    let n = perm.len();
    (0..n)
        .map(|k| points[perm[k]].dist(points[perm[(k + 1) % n]]))
        .sum()
}

pub fn route_length(tour: &Tour) -> f64 {
    route_length_of(&tour.perm, &tour.points)
}

/// Tour neighbors of the city at position `pos`.
pub fn neighbors(perm: &[usize], pos: usize) -> (usize, usize) {
    let n = perm.len();
    (perm[(pos + n - 1) % n], perm[(pos + 1) % n])
}

pub fn two_anchor_value(a: Point2, b: Point2, x: Point2) -> f64 {
    a.dist(x) + x.dist(b)
}

fn two_anchor_gradient(a: Point2, b: Point2, x: Point2) -> Option<Point2> {
    let (da, db) = (x.dist(a), x.dist(b));
    if da < COINCIDE_EPS || db < COINCIDE_EPS {
        return None;
    }
    Some((x - a) * (1.0 / da) + (x - b) * (1.0 / db))
}

/// Gradient of the tour length with respect to the point of `city`.
pub fn block_gradient(tour: &Tour, city: usize) -> Result<Point2, CtspError> {
    let pos = tour
        .perm
        .iter()
        .position(|&c| c == city)
        .ok_or_else(|| CtspError::BadPermutation(format!("city {} not in tour", city + 1)))?;
    let (pa, pb) = neighbors(&tour.perm, pos);
    two_anchor_gradient(tour.points[pa], tour.points[pb], tour.points[city])
        .ok_or(CtspError::Coincident { city })
}

/// Sampling schedule of the block oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    /// Samples per candidate segment.
    pub samples: usize,
    /// Rounds of 10x zoom around each segment's incumbent.
    pub refinements: usize,
    /// Side of the interior grid used by the regularized oracle.
    pub interior_grid: usize,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            samples: 1000,
            refinements: 3,
            interior_grid: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSolution {
    pub point: Point2,
    pub value: f64,
}

/// Value-then-proximity ordering used by both oracles. Ties are measured
/// against the lowest value seen so far, so a chain of near-ties cannot
/// drift away from the minimum.
struct Incumbent {
    anchor: Point2,
    best: Option<BlockSolution>,
    min_value: f64,
}

impl Incumbent {
    fn new(anchor: Point2) -> Self {
        Self {
            anchor,
            best: None,
            min_value: f64::INFINITY,
        }
    }

    fn offer(&mut self, point: Point2, value: f64) -> bool {
        let min = self.min_value.min(value);
        let band = TIE_TOLERANCE * (1.0 + min.abs());
        let take = match &self.best {
            None => true,
            Some(b) => {
                b.value > min + band
                    || (value <= min + band && point.dist(self.anchor) < b.point.dist(self.anchor))
            }
        };
        self.min_value = min;
        if take {
            self.best = Some(BlockSolution { point, value });
        }
        take
    }
}

fn candidate_segments(a: Point2, b: Point2, poly: &Polygon) -> Vec<Segment> {
    let mut segs = if a == b {
        if point_in_polygon(a, poly).is_closed_member() {
            vec![Segment::new(a, a)]
        } else {
            Vec::new()
        }
    } else {
        clip_segment_to_polygon(&Segment::new(a, b), poly)
    };
    segs.extend(poly.edges());
    segs
}

/// Global minimizer of `|a - x| + |x - b|` over the closed polygon.
///
/// Candidates are `[a, b]` clipped to the polygon and every edge, each
/// sampled at `params.samples` parameters plus the projection of `current`,
/// then refined by `params.refinements` rounds of 10x zoom. Segments whose
/// coarse minimum cannot beat the incumbent, given that the objective is
/// 2-Lipschitz, are not refined. `current` is itself a candidate when
/// feasible, and ties go to the candidate nearest `current`.
pub fn solve_block_global(
    a: Point2,
    b: Point2,
    poly: &Polygon,
    current: Point2,
    params: &OracleParams,
) -> BlockSolution {
    let f = |x: Point2| two_anchor_value(a, b, x);
    let samples = params.samples.max(2);
    let segs = candidate_segments(a, b, poly);
    let mut global = Incumbent::new(current);
    if point_in_polygon(current, poly).is_closed_member() {
        global.offer(current, f(current));
    }

    let sample_segment = |seg: &Segment, lo: f64, hi: f64, inc: &mut Incumbent| -> Option<f64> {
        let mut arg = None;
        for i in 0..samples {
            let t = if i + 1 == samples {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (samples - 1) as f64
            };
            let x = seg.at(t);
            if inc.offer(x, f(x)) {
                arg = Some(t);
            }
        }
        let t = seg.closest_param(current).clamp(lo, hi);
        let x = seg.at(t);
        if inc.offer(x, f(x)) {
            arg = Some(t);
        }
        arg
    };

    let mut coarse = Vec::with_capacity(segs.len());
    for seg in &segs {
        let mut inc = Incumbent::new(current);
        let t = sample_segment(seg, 0.0, 1.0, &mut inc).unwrap_or(0.0);
        let best = inc.best.expect("segment sampled");
        global.offer(best.point, best.value);
        coarse.push((t, best.value));
    }
    let threshold = global.best.map_or(f64::INFINITY, |b| {
        b.value + TIE_TOLERANCE * (1.0 + b.value.abs())
    });
    for (seg, &(t0, v0)) in segs.iter().zip(&coarse) {
        let slack = 2.0 * seg.length() / (samples - 1) as f64;
        if v0 - slack > threshold || seg.is_degenerate() {
            continue;
        }
        let mut t = t0;
        let mut width = 1.0;
        let mut inc = Incumbent::new(current);
        inc.offer(seg.at(t0), f(seg.at(t0)));
        for _ in 0..params.refinements {
            width /= 10.0;
            let lo = (t - width / 2.0).max(0.0);
            let hi = (t + width / 2.0).min(1.0);
            if let Some(tn) = sample_segment(seg, lo, hi, &mut inc) {
                t = tn;
            }
        }
        let best = inc.best.expect("segment sampled");
        global.offer(best.point, best.value);
    }
    global.best.expect("polygon has edges")
}

/// Global minimizer of a regularized quadratic block model over the closed
/// polygon. Each edge and each piece of `[a, b]` inside the polygon is
/// minimized exactly (the model restricted to a segment is a quadratic in
/// one variable); the base point, the interior stationary point when the
/// model is strictly convex, and an interior grid are added as candidates.
/// Ties go to the candidate nearest the model base.
pub fn solve_block_regularized(
    a: Point2,
    b: Point2,
    poly: &Polygon,
    model: &QuadraticModel,
    params: &OracleParams,
) -> BlockSolution {
    let xk = Point2::from_slice(&model.base);
    let m = |x: Point2| model.value(&[x.x, x.y]);
    let h = model_matrix(model);
    let g = Point2::from_slice(&model.gradient);
    let mut inc = Incumbent::new(xk);
    if point_in_polygon(xk, poly).is_closed_member() {
        inc.offer(xk, m(xk));
    }
    for seg in candidate_segments(a, b, poly) {
        let d0 = seg.p - xk;
        let e = seg.q - seg.p;
        let he = mat_vec(&h, e);
        let c2 = 0.5 * e.dot(he);
        let c1 = g.dot(e) + d0.dot(he);
        let mut ts = vec![0.0, 1.0];
        if c2 > 0.0 {
            ts.push((-c1 / (2.0 * c2)).clamp(0.0, 1.0));
        }
        for t in ts {
            let x = seg.at(t);
            inc.offer(x, m(x));
        }
    }
    let det = h[0] * h[3] - h[1] * h[2];
    if det > 0.0 && h[0] > 0.0 {
        let d = Point2::new(
            (-h[3] * g.x + h[1] * g.y) / det,
            (h[2] * g.x - h[0] * g.y) / det,
        );
        let x = xk + d;
        if point_in_polygon(x, poly).is_closed_member() {
            inc.offer(x, m(x));
        }
    }
    let (lo, hi) = poly.bounding_box();
    let n = params.interior_grid;
    if n >= 2 {
        for i in 0..n {
            for j in 0..n {
                let x = Point2::new(
                    lo.x + (hi.x - lo.x) * i as f64 / (n - 1) as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / (n - 1) as f64,
                );
                if point_in_polygon(x, poly) == Containment::Inside {
                    inc.offer(x, m(x));
                }
            }
        }
    }
    inc.best.expect("polygon has edges")
}

fn model_matrix(model: &QuadraticModel) -> [f64; 4] {
    let mut h = model
        .hessian
        .as_ref()
        .map_or([0.0; 4], |v| [v[0], v[1], v[2], v[3]]);
    h[0] += model.sigma;
    h[3] += model.sigma;
    h
}

fn mat_vec(h: &[f64; 4], v: Point2) -> Point2 {
    Point2::new(h[0] * v.x + h[1] * v.y, h[2] * v.x + h[3] * v.y)
}

/// Constraints describing the polygon near `x`: the outward half-planes of
/// the edges within the boundary band of `x`. Edges meeting at a reflex
/// vertex near `x` are left out, because there the polygon is locally a
/// union of half-planes and is not constrained in any direction.
pub fn local_constraints(poly: &Polygon, x: Point2) -> Vec<SmoothInequality> {
    let eps = poly.boundary_eps();
    let v = poly.vertices();
    let n = v.len();
    let mut skip = vec![false; n];
    for k in 0..n {
        let prev = v[(k + n - 1) % n];
        let next = v[(k + 1) % n];
        let reflex = (v[k] - prev).cross(next - v[k]) < 0.0;
        if reflex && v[k].dist(x) <= eps {
            skip[(k + n - 1) % n] = true;
            skip[k] = true;
        }
    }
    (0..n)
        .filter(|&k| !skip[k] && poly.edge(k).distance_to(x) <= eps)
        .map(|k| {
            let e = poly.edge(k);
            let d = e.q - e.p;
            let len = d.norm();
            let normal = vec![d.y / len, -d.x / len];
            let offset = normal[0] * e.p.x + normal[1] * e.p.y;
            SmoothInequality::linear(format!("edge {}", k + 1), normal, offset)
        })
        .collect()
}

/// Multipliers for the local polygon constraints at `x`.
pub fn certify(poly: &Polygon, x: Point2, grad: Point2, delta: f64) -> Certificate {
    let constraints = local_constraints(poly, x);
    let record = estimate_multipliers(0, &[x.x, x.y], &[grad.x, grad.y], &constraints, delta);
    Certificate {
        record,
        constraints,
    }
}

/// The point blocks of a fixed visiting order. Block `j` is the `j`-th
/// smallest city of `perm`, so blocks are visited in city order.
#[derive(Debug, Clone)]
pub struct TourProblem<'a> {
    instance: &'a Instance,
    perm: Vec<usize>,
    cities: Vec<usize>,
    block_of: Vec<usize>,
    pos_of: Vec<usize>,
    pub params: OracleParams,
    pub delta: f64,
}

impl<'a> TourProblem<'a> {
    pub fn new(
        instance: &'a Instance,
        perm: &[usize],
        params: OracleParams,
        delta: f64,
    ) -> Result<Self, CtspError> {
        check_permutation(perm, instance.len())?;
        let mut cities = perm.to_vec();
        cities.sort_unstable();
        let mut block_of = vec![usize::MAX; instance.len()];
        for (j, &c) in cities.iter().enumerate() {
            block_of[c] = j;
        }
        let mut pos_of = vec![usize::MAX; instance.len()];
        for (k, &c) in perm.iter().enumerate() {
            pos_of[c] = k;
        }
        Ok(Self {
            instance,
            perm: perm.to_vec(),
            cities,
            block_of,
            pos_of,
            params,
            delta,
        })
    }

    pub fn cities(&self) -> &[usize] {
        &self.cities
    }

    /// Block vectors for the cities of the tour, taken from `points`
    /// (indexed by city).
    pub fn blocks_from_points(&self, points: &[Point2]) -> Vec<Vec<f64>> {
        self.cities.iter().map(|&c| points[c].to_vec()).collect()
    }

    /// Writes block vectors back into `points` (indexed by city).
    pub fn write_points(&self, x: &[Vec<f64>], points: &mut [Point2]) {
        for (j, &c) in self.cities.iter().enumerate() {
            points[c] = Point2::from_slice(&x[j]);
        }
    }

    fn anchors(&self, x: &[Vec<f64>], j: usize) -> (Point2, Point2) {
        let (ca, cb) = neighbors(&self.perm, self.pos_of[self.cities[j]]);
        (
            Point2::from_slice(&x[self.block_of[ca]]),
            Point2::from_slice(&x[self.block_of[cb]]),
        )
    }

    /// Moves a trial that landed on a neighbor off it, along `a -> b` (or
    /// toward the polygon's interior when the neighbors coincide), provided
    /// the shifted point stays feasible.
    fn separate(&self, j: usize, a: Point2, b: Point2, x: Point2) -> Point2 {
        let near_a = x.dist(a) < COINCIDE_EPS;
        let near_b = x.dist(b) < COINCIDE_EPS;
        if !near_a && !near_b {
            return x;
        }
        let poly = self.instance.polygon(self.cities[j]);
        let dir = if a.dist(b) >= COINCIDE_EPS {
            if near_a {
                b - a
            } else {
                a - b
            }
        } else {
            poly.interior_point() - x
        };
        let len = dir.norm();
        if len == 0.0 {
            return x;
        }
        let shift = poly.boundary_eps().max(1e3 * COINCIDE_EPS);
        let y = x + dir * (shift / len);
        if point_in_polygon(y, poly).is_closed_member() {
            debug!(
                "city {}: trial moved off a coincident neighbor",
                self.cities[j] + 1
            );
            y
        } else {
            x
        }
    }
}

impl BlockProblem for TourProblem<'_> {
    fn n_blocks(&self) -> usize {
        self.cities.len()
    }

    fn block_dim(&self, _i: usize) -> usize {
        2
    }

    fn value(&self, x: &[Vec<f64>]) -> f64 {
        let n = self.perm.len();
        (0..n)
            .map(|k| {
                let p = &x[self.block_of[self.perm[k]]];
                let q = &x[self.block_of[self.perm[(k + 1) % n]]];
                (p[0] - q[0]).hypot(p[1] - q[1])
            })
            .sum()
    }

    fn block_gradient(&self, x: &[Vec<f64>], i: usize) -> Result<Vec<f64>, BcdError> {
        let (a, b) = self.anchors(x, i);
        two_anchor_gradient(a, b, Point2::from_slice(&x[i]))
            .map(Point2::to_vec)
            .ok_or(BcdError::NonSmooth { block: i })
    }

    fn value_change(&self, x: &[Vec<f64>], i: usize, trial: &[f64]) -> f64 {
        let (a, b) = self.anchors(x, i);
        two_anchor_value(a, b, Point2::from_slice(trial))
            - two_anchor_value(a, b, Point2::from_slice(&x[i]))
    }

    fn exact_block_minimizer(
        &self,
        x: &[Vec<f64>],
        i: usize,
    ) -> Option<Result<BlockTrial, BcdError>> {
        let (a, b) = self.anchors(x, i);
        let poly = self.instance.polygon(self.cities[i]);
        let current = Point2::from_slice(&x[i]);
        let sol = solve_block_global(a, b, poly, current, &self.params);
        let point = self.separate(i, a, b, sol.point);
        let certificate =
            two_anchor_gradient(a, b, point).map(|g| certify(poly, point, g, self.delta));
        Some(Ok(BlockTrial {
            point: point.to_vec(),
            certificate,
        }))
    }

    fn model_block_minimizer(
        &self,
        x: &[Vec<f64>],
        i: usize,
        model: &QuadraticModel,
        delta: f64,
    ) -> Result<BlockTrial, BcdError> {
        let (a, b) = self.anchors(x, i);
        let poly = self.instance.polygon(self.cities[i]);
        let sol = solve_block_regularized(a, b, poly, model, &self.params);
        let grad = Point2::from_slice(&model.gradient_at(&sol.point.to_vec()));
        Ok(BlockTrial {
            point: sol.point.to_vec(),
            certificate: Some(certify(poly, sol.point, grad, delta)),
        })
    }
}

/// Result of optimizing the points of a fixed visiting order.
#[derive(Debug, Clone)]
pub struct PointsOutcome {
    /// All points, indexed by city; cities outside the order are unchanged.
    pub points: Vec<Point2>,
    /// Tour length recomputed from the final points.
    pub route_length: f64,
    pub bcd: BcdOutcome,
}

/// Runs block coordinate descent on the points of the cities in `perm`,
/// starting from `x0` (indexed by city). `perm` may list a subset of the
/// instance's cities.
pub fn optimize_points(
    instance: &Instance,
    perm: &[usize],
    x0: &[Point2],
    config: &BcdConfig,
    params: &OracleParams,
) -> Result<PointsOutcome, CtspError> {
    if x0.len() != instance.len() {
        return Err(CtspError::PointCount {
            expected: instance.len(),
            got: x0.len(),
        });
    }
    let problem = TourProblem::new(instance, perm, *params, config.delta)?;
    for &c in problem.cities() {
        if !point_in_polygon(x0[c], instance.polygon(c)).is_closed_member() {
            return Err(CtspError::Infeasible { city: c });
        }
    }
    let bcd = run_bcd(&problem, problem.blocks_from_points(x0), config)?;
    let mut points = x0.to_vec();
    problem.write_points(&bcd.x, &mut points);
    Ok(PointsOutcome {
        route_length: route_length_of(perm, &points),
        points,
        bcd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcd::{descent_violations, StopReason};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::rectangle(x0, y0, x1, y1).unwrap()
    }

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    /// Minimum of the two-anchor value over an `n x n` grid of the polygon's
    /// bounding box, keeping closed-member points.
    fn grid_oracle(a: Point2, b: Point2, poly: &Polygon, n: usize) -> (Point2, f64) {
        let (lo, hi) = poly.bounding_box();
        let mut best = (lo, f64::INFINITY);
        for i in 0..n {
            for j in 0..n {
                let x = p(
                    lo.x + (hi.x - lo.x) * i as f64 / (n - 1) as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / (n - 1) as f64,
                );
                if point_in_polygon(x, poly).is_closed_member() {
                    let v = two_anchor_value(a, b, x);
                    if v < best.1 {
                        best = (x, v);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn route_length_examples() {
        let t = Tour::new(
            vec![0, 1, 2, 3],
            vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)],
        )
        .unwrap();
        assert_eq!(route_length(&t), 4.0);
        let t = Tour::new(vec![1, 0], vec![p(0.0, 0.0), p(3.0, 4.0)]).unwrap();
        assert_eq!(route_length(&t), 10.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point2> = (0..5).map(|_| p(rng.random(), rng.random())).collect();
        let perm = vec![3, 0, 4, 1, 2];
        let mut naive = 0.0;
        for k in 0..5 {
            let (u, v) = (pts[perm[k]], pts[perm[(k + 1) % 5]]);
            naive += ((u.x - v.x).powi(2) + (u.y - v.y).powi(2)).sqrt();
        }
        let t = Tour::new(perm, pts).unwrap();
        assert!((route_length(&t) - naive).abs() < 1e-12);
    }

    #[test]
    fn tour_validation() {
        assert!(matches!(
            Tour::new(vec![0, 0], vec![p(0.0, 0.0); 2]),
            Err(CtspError::BadPermutation(_))
        ));
        assert!(matches!(
            Tour::new(vec![0, 1], vec![p(0.0, 0.0); 3]),
            Err(CtspError::PointCount { .. })
        ));
        assert!(Instance::new("one", vec![square(0.0, 0.0, 1.0, 1.0)]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let t = Tour::new(vec![0, 1, 2], vec![p(-1.0, 0.0), p(0.0, 0.0), p(1.0, 0.0)]).unwrap();
        let g = block_gradient(&t, 1).unwrap();
        assert!(g.norm() < 1e-15);
        let t = Tour::new(vec![0, 1, 2], vec![p(-1.0, 0.0), p(0.0, 1.0), p(1.0, 0.0)]).unwrap();
        let g = block_gradient(&t, 1).unwrap();
        assert!(g.x.abs() < 1e-15);
        assert!((g.y - 2f64.sqrt()).abs() < 1e-15);
        let t = Tour::new(vec![0, 1, 2], vec![p(0.0, 0.0), p(0.0, 0.0), p(1.0, 0.0)]).unwrap();
        assert_eq!(
            block_gradient(&t, 1),
            Err(CtspError::Coincident { city: 1 })
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let pts: Vec<Point2> = (0..4)
                .map(|_| p(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
                .collect();
            let t = Tour::new(vec![2, 0, 3, 1], pts.clone()).unwrap();
            for city in 0..4 {
                let g = block_gradient(&t, city).unwrap();
                let h = 1e-6;
                let mut fd = [0.0; 2];
                for (k, slot) in fd.iter_mut().enumerate() {
                    let mut plus = pts.clone();
                    let mut minus = pts.clone();
                    if k == 0 {
                        plus[city].x += h;
                        minus[city].x -= h;
                    } else {
                        plus[city].y += h;
                        minus[city].y -= h;
                    }
                    *slot = (route_length_of(&t.perm, &plus) - route_length_of(&t.perm, &minus))
                        / (2.0 * h);
                }
                let err = (fd[0] - g.x).abs().max((fd[1] - g.y).abs());
                assert!(err <= 1e-5 * g.norm().max(1e-3), "{err}");
            }
        }
    }

    #[test]
    fn block_oracle_collinear_tie_prefers_current() {
        let sq = square(0.0, 0.0, 1.0, 1.0);
        let s = solve_block_global(
            p(0.0, 0.0),
            p(2.0, 0.0),
            &sq,
            p(0.3, 0.7),
            &OracleParams::default(),
        );
        assert!((s.value - 2.0).abs() < 1e-12);
        assert!(s.point.dist(p(0.3, 0.0)) < 1e-12, "{:?}", s.point);
        let (_, ov) = grid_oracle(p(0.0, 0.0), p(2.0, 0.0), &sq, 2000);
        assert!((ov - 2.0).abs() < 1e-12);
    }

    #[test]
    fn block_oracle_detour_above_segment() {
        let poly = square(-0.5, 0.5, 0.5, 1.5);
        let (a, b) = (p(-1.0, 0.0), p(1.0, 0.0));
        let s = solve_block_global(a, b, &poly, p(0.2, 1.0), &OracleParams::default());
        // the minimum is flat, so points within the tie band of it qualify
        assert!(s.point.dist(p(0.0, 0.5)) < 1e-5, "{:?}", s.point);
        assert!((s.value - 2.0 * 1.25f64.sqrt()).abs() < 1e-11);
        let (ox, ov) = grid_oracle(a, b, &poly, 2001);
        assert!(s.value <= ov + TIE_TOLERANCE * (1.0 + ov));
        assert!(ox.dist(p(0.0, 0.5)) < 1e-3);
    }

    #[test]
    fn block_oracle_coincident_anchors() {
        let sq = square(0.0, 0.0, 1.0, 1.0);
        let a = p(5.0, 5.0);
        let s = solve_block_global(a, a, &sq, p(0.5, 0.5), &OracleParams::default());
        assert!(s.point.dist(p(1.0, 1.0)) < 1e-9);
        assert!((s.value - 2.0 * 32f64.sqrt()).abs() < 1e-9);
        let (_, ov) = grid_oracle(a, a, &sq, 2000);
        assert!((ov - 11.3137085).abs() < 1e-6);
    }

    #[test]
    fn block_oracle_never_worse_than_current_and_respects_triangle_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let k = rng.random_range(5..14);
            let poly = crate::geometry::random_star_polygon(&mut rng, k, p(0.0, 0.0), 1.0).unwrap();
            let a = p(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let b = p(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let cur = poly.sample_interior(&mut rng);
            let s = solve_block_global(a, b, &poly, cur, &OracleParams::default());
            assert!(point_in_polygon(s.point, &poly).is_closed_member());
            assert!(s.value <= two_anchor_value(a, b, cur));
            let ab = a.dist(b);
            assert!(s.value >= ab - 1e-12);
            let touches = !clip_segment_to_polygon(&Segment::new(a, b), &poly).is_empty();
            assert_eq!(touches, s.value <= ab + 1e-12 * (1.0 + ab), "{a:?} {b:?}");
        }
    }

    fn model(g: [f64; 2], sigma: f64, base: Point2) -> QuadraticModel {
        QuadraticModel::new(g.to_vec(), sigma, base.to_vec())
    }

    #[test]
    fn regularized_oracle_examples() {
        let sq = square(0.0, 0.0, 1.0, 1.0);
        let xk = p(0.4, 0.6);
        let params = OracleParams::default();
        let s = solve_block_regularized(
            p(-1.0, 0.0),
            p(2.0, 3.0),
            &sq,
            &model([1.0, -2.0], 1e6, xk),
            &params,
        );
        assert!(s.point.dist(xk) < 1e-5);
        assert!(s.value <= 0.0 && s.value > -1e-5);

        let s = solve_block_regularized(
            p(-1.0, 0.0),
            p(2.0, 3.0),
            &sq,
            &model([1.0, -2.0], 0.0, xk),
            &params,
        );
        assert_eq!(s.point, p(0.0, 1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let xk = p(rng.random(), rng.random());
            let m = model(
                [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                rng.random_range(0.0..4.0),
                xk,
            );
            let s = solve_block_regularized(p(-1.0, 0.5), p(2.0, 0.5), &sq, &m, &params);
            assert!(s.value <= 0.0);
            let n = 801;
            let mut best = f64::INFINITY;
            for i in 0..n {
                for j in 0..n {
                    let x = [i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64];
                    best = best.min(m.value(&x));
                }
            }
            assert!(s.value <= best + 1e-12);
            assert!(s.value >= best - 1e-4);
        }
    }

    #[test]
    fn local_constraints_on_l_shape() {
        let l = Polygon::new(vec![
            p(0.0, 0.0),
            p(2.0, 0.0),
            p(2.0, 1.0),
            p(1.0, 1.0),
            p(1.0, 2.0),
            p(0.0, 2.0),
        ])
        .unwrap();
        assert!(local_constraints(&l, p(0.5, 0.5)).is_empty());
        assert_eq!(local_constraints(&l, p(1.0, 0.0)).len(), 1);
        assert_eq!(local_constraints(&l, p(0.0, 0.0)).len(), 2);
        // reflex corner
        assert!(local_constraints(&l, p(1.0, 1.0)).is_empty());
        let c = certify(&l, p(1.0, 0.0), p(0.0, 1.0), 1e-6);
        assert!((c.record.mu[0] - 1.0).abs() < 1e-12);
        assert!(c.record.kkt_residual < 1e-12);
    }

    #[test]
    fn two_squares_meet_at_closest_pair() {
        let inst = Instance::new(
            "pair",
            vec![square(0.0, 0.0, 1.0, 1.0), square(3.0, 0.5, 4.0, 2.0)],
        )
        .unwrap();
        let x0 = vec![p(0.2, 0.2), p(3.7, 1.8)];
        let out = optimize_points(
            &inst,
            &[0, 1],
            &x0,
            &BcdConfig::default(),
            &OracleParams::default(),
        )
        .unwrap();
        // closest pair: any (1, y), (3, y) with y in [0.5, 1], length 2 * 2
        assert!(
            (out.route_length - 4.0).abs() < 1e-9,
            "{}",
            out.route_length
        );
        assert!((out.points[0].x - 1.0).abs() < 1e-9 && (out.points[1].x - 3.0).abs() < 1e-9);
        // a height mismatch d costs about d^2 / 2, inside the tie band below 3e-6
        assert!((out.points[0].y - out.points[1].y).abs() < 1e-5);
        assert_eq!(out.bcd.stop, StopReason::Repetition);
    }

    #[test]
    fn optimal_points_stay_put() {
        let inst = Instance::new(
            "tri",
            vec![
                square(0.0, 0.0, 1.0, 1.0),
                square(2.0, 0.0, 3.0, 1.0),
                square(1.0, 2.0, 2.0, 3.0),
            ],
        )
        .unwrap();
        let x0 = vec![p(0.2, 0.3), p(2.8, 0.5), p(1.5, 2.6)];
        let cfg = BcdConfig::default();
        let first =
            optimize_points(&inst, &[0, 1, 2], &x0, &cfg, &OracleParams::default()).unwrap();
        assert!(first.route_length < route_length_of(&[0, 1, 2], &x0));
        assert!(descent_violations(first.bcd.f_initial, &first.bcd.trace, cfg.alpha).is_empty());
        let again = optimize_points(
            &inst,
            &[0, 1, 2],
            &first.points,
            &cfg,
            &OracleParams::default(),
        )
        .unwrap();
        assert_eq!(again.bcd.trace.len(), 3);
        assert!(again.bcd.trace.iter().all(|r| r.step_norm == 0.0));
        assert_eq!(again.points, first.points);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let inst = Instance::new(
            "pair",
            vec![square(0.0, 0.0, 1.0, 1.0), square(3.0, 0.0, 4.0, 1.0)],
        )
        .unwrap();
        let err = optimize_points(
            &inst,
            &[0, 1],
            &[p(2.0, 0.0), p(3.5, 0.5)],
            &BcdConfig::default(),
            &OracleParams::default(),
        );
        assert_eq!(err.unwrap_err(), CtspError::Infeasible { city: 0 });
    }
}
