//! Open coverings with constitutive constraints, and the machinery that
//! turns them into certified trial points for a regularized quadratic model.
//!
//! A block's feasible set is never described globally. Instead it is covered
//! by open sets (balls, boxes, convex polygons), and inside each set a short
//! list of smooth inequalities `g(x) <= 0` describes the feasible part. For a
//! given model the subproblem is minimized globally over the closure of every
//! covering set, one trial is selected, and nonnegative multipliers are fitted
//! so the trial's approximate KKT residual and complementarity can be checked.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::Point2;
use crate::nnls::nnls;

pub mod fixtures;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoveringError {
    #[error("grid search supports at most 3 dimensions, got {0}")]
    DimensionTooLarge(usize),
    #[error("grid resolution must be at least 16, got {0}")]
    ResolutionTooSmall(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no grid point of the covering set is feasible")]
    EmptyFeasibleSample,
    #[error("no covering set produced a feasible candidate")]
    NoCandidate,
    #[error("point {point:?} lies in no open covering set where it is feasible")]
    CoverViolation { point: Vec<f64> },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
}

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A constitutive constraint `g(x) <= 0` together with its gradient.
#[derive(Clone)]
pub struct SmoothInequality {
    label: String,
    value: Arc<ScalarFn>,
    gradient: Arc<VectorFn>,
}

impl SmoothInequality {
    pub fn new<F, G>(label: impl Into<String>, value: F, gradient: G) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    /// `normal . x - offset <= 0`.
    pub fn linear(label: impl Into<String>, normal: Vec<f64>, offset: f64) -> Self {
        let n2 = normal.clone();
        Self::new(
            label,
            move |x| dot(&normal, x) - offset,
            move |_| n2.clone(),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }
}

impl fmt::Debug for SmoothInequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothInequality")
            .field("label", &self.label)
            .finish()
    }
}

/// Strict half-plane `normal . x < offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: [f64; 2],
    pub offset: f64,
}

/// Open region descriptor of a covering set.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Interior of a convex polygon, given by its half-planes.
    ConvexPolygon {
        half_planes: Vec<HalfPlane>,
    },
}

impl Region {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, CoveringError> {
        if !(radius > 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
            return Err(CoveringError::InvalidRegion(format!(
                "ball radius {radius}"
            )));
        }
        Ok(Region::Ball { center, radius })
    }

    pub fn open_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, CoveringError> {
        if lo.len() != hi.len()
            || lo
                .iter()
                .zip(&hi)
                .any(|(a, b)| !a.is_finite() || !b.is_finite() || a >= b)
        {
            return Err(CoveringError::InvalidRegion(
                "box bounds must satisfy lo < hi".into(),
            ));
        }
        Ok(Region::Box { lo, hi })
    }

    /// Interior of the convex polygon with counterclockwise `vertices`.
    pub fn convex_polygon(vertices: &[Point2]) -> Result<Self, CoveringError> {
        let n = vertices.len();
        if n < 3 {
            return Err(CoveringError::InvalidRegion(
                "convex polygon needs 3 vertices".into(),
            ));
        }
        let mut half_planes = Vec::with_capacity(n);
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) <= 0.0 {
                return Err(CoveringError::InvalidRegion(format!(
                    "vertex {} is not a strictly convex counterclockwise turn",
                    (i + 1) % n
                )));
            }
            let e = b - a;
            let len = e.norm();
            let normal = [e.y / len, -e.x / len];
            half_planes.push(HalfPlane {
                normal,
                offset: normal[0] * a.x + normal[1] * a.y,
            });
        }
        Ok(Region::ConvexPolygon { half_planes })
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Ball { center, .. } => center.len(),
            Region::Box { lo, .. } => lo.len(),
            Region::ConvexPolygon { .. } => 2,
        }
    }

    /// Strict membership with `margin` of clearance from the boundary.
    pub fn contains_open(&self, x: &[f64], margin: f64) -> bool {
        match self {
            Region::Ball { center, radius } => dist(center, x) < radius - margin,
            Region::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(x)
                .all(|((l, h), v)| *v > l + margin && *v < h - margin),
            Region::ConvexPolygon { half_planes } => half_planes
                .iter()
                .all(|h| h.normal[0] * x[0] + h.normal[1] * x[1] < h.offset - margin),
        }
    }

    /// Membership of the closure.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => dist(center, x) <= *radius,
            Region::Box { lo, hi } => lo.iter().zip(hi).zip(x).all(|((l, h), v)| v >= l && v <= h),
            Region::ConvexPolygon { half_planes } => half_planes
                .iter()
                .all(|h| h.normal[0] * x[0] + h.normal[1] * x[1] <= h.offset),
        }
    }

    /// Smallest axis box containing the closure, where it can be computed
    /// from the descriptor alone.
    fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Region::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            Region::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            Region::ConvexPolygon { .. } => None,
        }
    }
}

/// One open set `A` of a cover together with its constitutive constraints.
#[derive(Debug, Clone)]
pub struct CoveringSet {
    pub region: Region,
    pub constraints: Vec<SmoothInequality>,
    sample_box: (Vec<f64>, Vec<f64>),
}

impl CoveringSet {
    /// Ball and box regions derive their own sample box.
    pub fn new(region: Region, constraints: Vec<SmoothInequality>) -> Result<Self, CoveringError> {
        let sample_box = region.bounding_box().ok_or_else(|| {
            CoveringError::InvalidRegion("polygon regions need an explicit sample box".into())
        })?;
        Ok(Self {
            region,
            constraints,
            sample_box,
        })
    }

    /// Covering set with a user-supplied sample box, which must contain the
    /// closure of the region.
    pub fn with_sample_box(
        region: Region,
        constraints: Vec<SmoothInequality>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    ) -> Result<Self, CoveringError> {
        if lo.len() != region.dim() || hi.len() != region.dim() {
            return Err(CoveringError::DimensionMismatch {
                expected: region.dim(),
                got: lo.len(),
            });
        }
        if let Some((rlo, rhi)) = region.bounding_box() {
            let covers = rlo.iter().zip(&lo).all(|(r, l)| l <= r)
                && rhi.iter().zip(&hi).all(|(r, h)| h >= r);
            if !covers {
                return Err(CoveringError::InvalidRegion(
                    "sample box misses part of the region".into(),
                ));
            }
        }
        Ok(Self {
            region,
            constraints,
            sample_box: (lo, hi),
        })
    }

    pub fn sample_box(&self) -> (&[f64], &[f64]) {
        (&self.sample_box.0, &self.sample_box.1)
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    /// Feasibility for the subproblem: closure of the region and `g <= 0`.
    pub fn is_feasible(&self, x: &[f64]) -> bool {
        self.region.contains_closed(x) && self.constraints.iter().all(|g| g.evaluate(x) <= 0.0)
    }
}

/// Absolute clearance used to certify membership of an open set.
pub const OPEN_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct OpenCover {
    pub sets: Vec<CoveringSet>,
    pub margin: f64,
}

impl OpenCover {
    pub fn new(sets: Vec<CoveringSet>) -> Self {
        Self {
            sets,
            margin: OPEN_MARGIN,
        }
    }

    pub fn dim(&self) -> usize {
        self.sets.first().map_or(0, CoveringSet::dim)
    }

    /// First set whose open region contains `x`.
    pub fn membership_witness(&self, x: &[f64]) -> Option<usize> {
        self.sets
            .iter()
            .position(|s| s.region.contains_open(x, self.margin))
    }

    /// First set whose open region contains `x` and whose constraints hold at
    /// `x`; this is the certificate that `x` belongs to the covered set.
    pub fn feasibility_witness(&self, x: &[f64]) -> Option<usize> {
        self.sets.iter().position(|s| {
            s.region.contains_open(x, self.margin)
                && s.constraints.iter().all(|g| g.evaluate(x) <= 0.0)
        })
    }

    /// Errors with a cover violation when `x` has no feasibility witness.
    pub fn check_covered(&self, x: &[f64]) -> Result<usize, CoveringError> {
        self.feasibility_witness(x)
            .ok_or_else(|| CoveringError::CoverViolation { point: x.to_vec() })
    }
}

/// `g'd + d'Bd/2 + sigma |d|^2 / 2` with `d = x - base`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub gradient: Vec<f64>,
    /// Row-major symmetric matrix; `None` means `B = 0`.
    pub hessian: Option<Vec<f64>>,
    pub sigma: f64,
    pub base: Vec<f64>,
}

impl QuadraticModel {
    pub fn new(gradient: Vec<f64>, sigma: f64, base: Vec<f64>) -> Self {
        debug_assert_eq!(gradient.len(), base.len());
        Self {
            gradient,
            hessian: None,
            sigma,
            base,
        }
    }

    /// Attaches a symmetric model Hessian (row-major).
    pub fn with_hessian(mut self, hessian: Vec<f64>) -> Result<Self, CoveringError> {
        let n = self.base.len();
        if hessian.len() != n * n {
            return Err(CoveringError::DimensionMismatch {
                expected: n * n,
                got: hessian.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (hessian[i * n + j], hessian[j * n + i]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                    return Err(CoveringError::InvalidRegion(
                        "model Hessian must be finite and symmetric".into(),
                    ));
                }
            }
        }
        self.hessian = Some(hessian);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    /// Frobenius norm of `B`, an upper bound on its spectral norm.
    pub fn hessian_norm(&self) -> f64 {
        self.hessian
            .as_ref()
            .map_or(0.0, |h| h.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        let lin = dot(&self.gradient, &d);
        let quad = self.hessian.as_ref().map_or(0.0, |h| {
            let n = d.len();
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += d[i] * h[i * n + j] * d[j];
                }
            }
            s
        });
        lin + 0.5 * quad + 0.5 * self.sigma * dot(&d, &d)
    }

    /// `g + B d + sigma d`.
    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        let n = self.base.len();
        let d: Vec<f64> = x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        (0..n)
            .map(|i| {
                let bd = self
                    .hessian
                    .as_ref()
                    .map_or(0.0, |h| (0..n).map(|j| h[i * n + j] * d[j]).sum());
                self.gradient[i] + bd + self.sigma * d[i]
            })
            .collect()
    }
}

/// Grid minimizer of the model over one covering set.
#[derive(Debug, Clone, PartialEq)]
pub struct QprobMinimum {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub resolution: usize,
    pub refinements: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            resolution: 64,
            refinements: 6,
        }
    }
}

/// Relative width of the band in which two values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Cap on window moves that do not shrink the zoom window.
pub const MAX_RECENTER_MOVES: usize = 64;

/// Tracks the lowest sampled value and the sample nearest the anchor among
/// those within the tie band of it.
struct GridIncumbent<'a> {
    anchor: &'a [f64],
    best: Option<QprobMinimum>,
    min_value: f64,
}

impl GridIncumbent<'_> {
    fn offer(&mut self, point: &[f64], value: f64) {
        let min = self.min_value.min(value);
        // model values vanish at the base, so the band is purely relative
        let band = TIE_TOLERANCE * min.abs();
        let take = match &self.best {
            None => true,
            Some(b) => {
                b.value > min + band
                    || (value <= min + band
                        && dist(point, self.anchor) < dist(&b.point, self.anchor))
            }
        };
        self.min_value = min;
        if take {
            self.best = Some(QprobMinimum {
                point: point.to_vec(),
                value,
            });
        }
    }
}

/// Global minimization of the model over `closure(A) ∩ {g <= 0}` by grid
/// search over the set's sample box, refined by `refinements` successive 10x
/// zooms around the incumbent. A window whose incumbent travelled more than
/// an eighth of its width, or ends up near one of its inner edges, is
/// recentered at the same width instead of shrunk, at most
/// [`MAX_RECENTER_MOVES`] times. Grid points close to a constraint boundary
/// also contribute their projection onto it. Every grid also carries the coordinate lines
/// of the base and of the incumbent. The model base is injected as a
/// candidate whenever it is feasible for the set, and ties prefer points
/// nearer the base.
pub fn solve_qprob_grid(
    set: &CoveringSet,
    model: &QuadraticModel,
    resolution: usize,
    refinements: usize,
) -> Result<QprobMinimum, CoveringError> {
    let dim = set.dim();
    if dim > 3 {
        return Err(CoveringError::DimensionTooLarge(dim));
    }
    if resolution < 16 {
        return Err(CoveringError::ResolutionTooSmall(resolution));
    }
    if model.dim() != dim {
        return Err(CoveringError::DimensionMismatch {
            expected: dim,
            got: model.dim(),
        });
    }
    let (box_lo, box_hi) = set.sample_box();
    let mut inc = GridIncumbent {
        anchor: &model.base,
        best: None,
        min_value: f64::INFINITY,
    };
    let consider = |x: &[f64], inc: &mut GridIncumbent| {
        if set.is_feasible(x) {
            inc.offer(x, model.value(x));
        }
    };
    // grid points within `near` of a constraint's zero set also contribute
    // their projection onto it, so curved boundaries are sampled exactly
    let consider_near = |x: &[f64], near: f64, inc: &mut GridIncumbent| {
        consider(x, inc);
        for c in &set.constraints {
            if let Some(z) = project_onto_zero_set(c, x, near) {
                consider(&z, inc);
            }
        }
    };
    consider(&model.base, &mut inc);

    let mut lo = box_lo.to_vec();
    let mut hi = box_hi.to_vec();
    let mut width: Vec<f64> = (0..dim).map(|k| box_hi[k] - box_lo[k]).collect();
    let (mut shrinks, mut moves) = (0, 0);
    let mut center: Option<Vec<f64>> = None;
    loop {
        // regular lines plus the coordinates of the base and the incumbent,
        // so constraint boundaries through either are sampled exactly
        let axes: Vec<Vec<f64>> = (0..dim)
            .map(|k| {
                let mut v: Vec<f64> = (0..resolution)
                    .map(|i| grid_coord(lo[k], hi[k], i, resolution))
                    .collect();
                let extra =
                    std::iter::once(model.base[k]).chain(inc.best.as_ref().map(|b| b.point[k]));
                v.extend(extra.filter(|c| *c >= lo[k] && *c <= hi[k]));
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect();
        let near = 2.0
            * (0..dim)
                .map(|k| (hi[k] - lo[k]) / (resolution - 1) as f64)
                .fold(0.0, f64::max);
        let mut idx = vec![0usize; dim];
        let mut x = vec![0.0; dim];
        'grid: loop {
            for k in 0..dim {
                x[k] = axes[k][idx[k]];
            }
            consider_near(&x, near, &mut inc);
            for k in 0..dim {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    continue 'grid;
                }
                idx[k] = 0;
            }
            break;
        }
        if shrinks == refinements {
            break;
        }
        let Some(b) = &inc.best else { break };
        // an incumbent that travelled far within the window, or sits at an
        // inner window edge, may be chasing a minimizer outside the next
        // window: recenter without shrinking
        let chasing = (0..dim).any(|k| {
            let near = 2.0 * width[k] / (resolution - 1) as f64;
            let moved = center
                .as_ref()
                .is_some_and(|c: &Vec<f64>| (b.point[k] - c[k]).abs() > width[k] / 8.0);
            moved
                || (b.point[k] - lo[k] < near && lo[k] > box_lo[k])
                || (hi[k] - b.point[k] < near && hi[k] < box_hi[k])
        });
        if chasing && moves < MAX_RECENTER_MOVES {
            moves += 1;
        } else {
            shrinks += 1;
            width.iter_mut().for_each(|w| *w /= 10.0);
        }
        for k in 0..dim {
            lo[k] = (b.point[k] - width[k] / 2.0).max(box_lo[k]);
            hi[k] = (b.point[k] + width[k] / 2.0).min(box_hi[k]);
        }
        center = Some(b.point.clone());
    }
    inc.best.ok_or(CoveringError::EmptyFeasibleSample)
}

/// Newton projection of `x` onto `{g = 0}` when `x` lies within about `near`
/// of it, nudged to the feasible side.
fn project_onto_zero_set(g: &SmoothInequality, x: &[f64], near: f64) -> Option<Vec<f64>> {
    let v = g.evaluate(x);
    let grad = g.gradient(x);
    let n2 = dot(&grad, &grad);
    if n2 < 1e-24 || v.abs() > near * n2.sqrt() {
        return None;
    }
    let mut z = x.to_vec();
    for _ in 0..3 {
        let v = g.evaluate(&z);
        let grad = g.gradient(&z);
        let n2 = dot(&grad, &grad);
        if n2 < 1e-24 {
            return None;
        }
        z.iter_mut()
            .zip(&grad)
            .for_each(|(zi, gi)| *zi -= v * gi / n2);
    }
    let v = g.evaluate(&z);
    if v > 0.0 {
        let grad = g.gradient(&z);
        let n2 = dot(&grad, &grad);
        z.iter_mut()
            .zip(&grad)
            .for_each(|(zi, gi)| *zi -= 2.0 * v * gi / n2);
    }
    z.iter().all(|c| c.is_finite()).then_some(z)
}

fn grid_coord(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

/// Trial point chosen among per-set minimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSelection {
    pub set_index: usize,
    pub point: Vec<f64>,
    pub value: f64,
}

/// Picks the first set whose minimizer has non-positive model value and lies
/// in that set's open region; otherwise the overall best minimizer, paired
/// with a set whose open region contains it and whose constraints it meets.
///
/// `per_set_minima[j]` is `None` when set `j` had no feasible sample.
pub fn select_trial(
    cover: &OpenCover,
    per_set_minima: &[Option<QprobMinimum>],
) -> Result<TrialSelection, CoveringError> {
    for (j, m) in per_set_minima.iter().enumerate() {
        if let Some(m) = m {
            if m.value <= 0.0 && cover.sets[j].region.contains_open(&m.point, cover.margin) {
                return Ok(TrialSelection {
                    set_index: j,
                    point: m.point.clone(),
                    value: m.value,
                });
            }
        }
    }
    let best = per_set_minima
        .iter()
        .flatten()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or(CoveringError::NoCandidate)?;
    let j = cover.check_covered(&best.point)?;
    Ok(TrialSelection {
        set_index: j,
        point: best.point.clone(),
        value: best.value,
    })
}

/// Multipliers fitted at a point for one covering set's constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierRecord {
    pub set_index: usize,
    pub mu: Vec<f64>,
    /// `|grad + sum mu_l grad g_l(x)|` at the fitted multipliers.
    pub kkt_residual: f64,
    /// `min(mu_l, -g_l(x))` per constraint.
    pub complementarity: Vec<f64>,
}

impl MultiplierRecord {
    pub fn worst_complementarity(&self) -> f64 {
        self.complementarity
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    }
}

/// Fits `mu >= 0` minimizing `|grad + sum mu_l grad g_l(x)|` over the
/// constraints with `g_l(x) >= -delta`; all other multipliers are zero.
pub fn estimate_multipliers(
    set_index: usize,
    x: &[f64],
    grad: &[f64],
    constraints: &[SmoothInequality],
    delta: f64,
) -> MultiplierRecord {
    let values: Vec<f64> = constraints.iter().map(|g| g.evaluate(x)).collect();
    let active: Vec<usize> = (0..constraints.len())
        .filter(|&l| values[l] >= -delta)
        .collect();
    let n = grad.len();
    let mut mu = vec![0.0; constraints.len()];
    if !active.is_empty() {
        let mut a = DMatrix::zeros(n, active.len());
        for (c, &l) in active.iter().enumerate() {
            let g = constraints[l].gradient(x);
            for r in 0..n {
                a[(r, c)] = g[r];
            }
        }
        let b = -DVector::from_column_slice(grad);
        let sol = nnls(&a, &b);
        for (c, &l) in active.iter().enumerate() {
            mu[l] = sol[c];
        }
    }
    let kkt_residual = lagrangian_residual(x, grad, constraints, &mu);
    let complementarity = mu.iter().zip(&values).map(|(m, g)| m.min(-g)).collect();
    MultiplierRecord {
        set_index,
        mu,
        kkt_residual,
        complementarity,
    }
}

/// `|grad + sum mu_l grad g_l(x)|`.
pub fn lagrangian_residual(
    x: &[f64],
    grad: &[f64],
    constraints: &[SmoothInequality],
    mu: &[f64],
) -> f64 {
    let mut r = grad.to_vec();
    for (g, &m) in constraints.iter().zip(mu) {
        if m != 0.0 {
            for (ri, gi) in r.iter_mut().zip(g.gradient(x)) {
                *ri += m * gi;
            }
        }
    }
    norm(&r)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Alt1Violation {
    /// The model value at the trial is positive.
    ModelIncrease { value: f64 },
    /// The KKT residual exceeds `theta` times the step.
    KktResidual { residual: f64, bound: f64 },
    /// Complementarity of constraint `index` exceeds `delta`.
    Complementarity { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alt1Check {
    pub model_value: f64,
    pub residual: f64,
    pub step_norm: f64,
    pub violations: Vec<Alt1Violation>,
}

impl Alt1Check {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the three acceptance conditions of a regularized-model trial:
/// non-positive model value, KKT residual at most `theta |step|`, and every
/// complementarity entry at most `delta`. All comparisons are inclusive.
///
/// `rec` must have been fitted against the model gradient at `x_trial`.
pub fn check_alternative1(
    model: &QuadraticModel,
    x_trial: &[f64],
    rec: &MultiplierRecord,
    theta: f64,
    delta: f64,
    step_norm: f64,
) -> Alt1Check {
    let model_value = model.value(x_trial);
    let mut violations = Vec::new();
    if model_value > 0.0 {
        violations.push(Alt1Violation::ModelIncrease { value: model_value });
    }
    let bound = theta * step_norm;
    if rec.kkt_residual > bound {
        violations.push(Alt1Violation::KktResidual {
            residual: rec.kkt_residual,
            bound,
        });
    }
    for (index, &value) in rec.complementarity.iter().enumerate() {
        if value > delta {
            violations.push(Alt1Violation::Complementarity { index, value });
        }
    }
    Alt1Check {
        model_value,
        residual: rec.kkt_residual,
        step_norm,
        violations,
    }
}

/// A certified regularized-model trial for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct Alt1Trial {
    pub selection: TrialSelection,
    pub record: MultiplierRecord,
}

/// Extra zoom rounds allowed beyond the configured ones while a trial fails
/// its certificate.
pub const MAX_EXTRA_REFINEMENTS: usize = 10;

/// Full subproblem procedure over a cover: per-set global minimization,
/// trial selection, and multiplier fitting at the selected point. Near
/// convergence the steps shrink below the grid resolution, so while the
/// selected trial fails [`check_alternative1`] the grids are refined further,
/// up to [`MAX_EXTRA_REFINEMENTS`] additional rounds. The last trial is
/// returned either way; callers check it.
pub fn alternative1_trial(
    cover: &OpenCover,
    model: &QuadraticModel,
    grid: GridParams,
    theta: f64,
    delta: f64,
) -> Result<Alt1Trial, CoveringError> {
    let mut refinements = grid.refinements;
    loop {
        let minima = cover
            .sets
            .iter()
            .map(
                |s| match solve_qprob_grid(s, model, grid.resolution, refinements) {
                    Ok(m) => Ok(Some(m)),
                    Err(CoveringError::EmptyFeasibleSample) => Ok(None),
                    Err(e) => Err(e),
                },
            )
            .collect::<Result<Vec<_>, _>>()?;
        let selection = select_trial(cover, &minima)?;
        let grad = model.gradient_at(&selection.point);
        let record = estimate_multipliers(
            selection.set_index,
            &selection.point,
            &grad,
            &cover.sets[selection.set_index].constraints,
            delta,
        );
        let step = dist(&selection.point, &model.base);
        let passed =
            check_alternative1(model, &selection.point, &record, theta, delta, step).passed();
        if passed {
            return Ok(Alt1Trial { selection, record });
        }
        if let Some(polished) = polish_trial(cover, model, &selection, &record, theta, delta) {
            return Ok(polished);
        }
        if refinements >= grid.refinements + MAX_EXTRA_REFINEMENTS {
            return Ok(Alt1Trial { selection, record });
        }
        refinements += 2;
    }
}

/// Newton iterations allowed when polishing a trial.
pub const POLISH_ITERATIONS: usize = 30;

/// Local Newton refinement of a grid trial on the KKT system of its set,
/// keeping the constraints with positive multipliers active. Near
/// convergence the model decrease falls below the rounding of the constraint
/// values, so a small lattice around the Newton point is searched as well:
/// unit-in-the-last-place offsets along the constraint normal and tangential
/// offsets within the residual tolerance. Returns the lowest-value point that
/// passes [`check_alternative1`], if any.
fn polish_trial(
    cover: &OpenCover,
    model: &QuadraticModel,
    selection: &TrialSelection,
    record: &MultiplierRecord,
    theta: f64,
    delta: f64,
) -> Option<Alt1Trial> {
    let set = &cover.sets[selection.set_index];
    let active: Vec<&SmoothInequality> = set
        .constraints
        .iter()
        .zip(&record.mu)
        .filter(|(_, &m)| m > 0.0)
        .map(|(g, _)| g)
        .collect();
    let mu: Vec<f64> = record.mu.iter().copied().filter(|&m| m > 0.0).collect();
    let z = kkt_newton(model, &active, selection.point.clone(), mu.clone())?;
    let n = z.len();
    let (normal, tangents) = local_frame(&active, &z);
    let curvature = model.sigma
        + model
            .hessian
            .as_ref()
            .map_or(0.0, |h| h.iter().map(|v| v * v).sum::<f64>().sqrt())
        + active
            .iter()
            .zip(&mu)
            .map(|(g, m)| m * fd_hessian(g, &z).iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>();
    let step = dist(&z, &model.base);
    let largest = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let unit = 0.25 * f64::EPSILON * largest.max(f64::MIN_POSITIVE);
    let tangent_unit = if curvature > 0.0 {
        (0.5 * theta * step / curvature / POLISH_LATTICE as f64).max(unit)
    } else {
        unit
    };
    let side = 2 * POLISH_LATTICE + 1;
    let normal_reach = (4 * POLISH_LATTICE) as i64;
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    for code in 0..side.pow(tangents.len() as u32) {
        let mut w = z.clone();
        let mut rest = code;
        for t in &tangents {
            let o = (rest % side) as f64 - POLISH_LATTICE as f64;
            rest /= side;
            for r in 0..n {
                w[r] += o * tangent_unit * t[r];
            }
        }
        // outermost feasible offset along the normal
        let shifts: Vec<i64> = match normal {
            Some(_) => (-normal_reach..=normal_reach).rev().collect(),
            None => vec![0],
        };
        for b in shifts {
            let mut v = w.clone();
            if let Some(nv) = &normal {
                for r in 0..n {
                    v[r] += b as f64 * unit * nv[r];
                }
            }
            if set.is_feasible(&v) && set.region.contains_open(&v, cover.margin) {
                let value = model.value(&v);
                if value <= 0.0 {
                    candidates.push((value, v));
                }
                break;
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    candidates.into_iter().find_map(|(value, w)| {
        let record = estimate_multipliers(
            selection.set_index,
            &w,
            &model.gradient_at(&w),
            &set.constraints,
            delta,
        );
        let step = dist(&w, &model.base);
        check_alternative1(model, &w, &record, theta, delta, step)
            .passed()
            .then_some(Alt1Trial {
                selection: TrialSelection {
                    set_index: selection.set_index,
                    point: w,
                    value,
                },
                record,
            })
    })
}

/// Half-width, in lattice steps, of the neighbourhood searched by the polish.
pub const POLISH_LATTICE: usize = 8;

/// Unit outward normal of the active constraints (their summed unit
/// gradients) and an orthonormal basis of the remaining directions.
fn local_frame(active: &[&SmoothInequality], z: &[f64]) -> (Option<Vec<f64>>, Vec<Vec<f64>>) {
    let n = z.len();
    let mut dir = vec![0.0; n];
    for g in active {
        let gg = g.gradient(z);
        let len = norm(&gg);
        if len > 0.0 {
            for r in 0..n {
                dir[r] += gg[r] / len;
            }
        }
    }
    let len = norm(&dir);
    let normal = (len > 0.0).then(|| dir.iter().map(|d| d / len).collect::<Vec<f64>>());
    let mut basis: Vec<Vec<f64>> = normal.iter().cloned().collect();
    let mut tangents = Vec::new();
    for e in 0..n {
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        for b in &basis {
            let p = dot(&v, b);
            for r in 0..n {
                v[r] -= p * b[r];
            }
        }
        let l = norm(&v);
        if l > 1e-8 && basis.len() < n {
            let v: Vec<f64> = v.iter().map(|x| x / l).collect();
            basis.push(v.clone());
            tangents.push(v);
        }
    }
    (normal, tangents)
}

/// Solves `grad m(z) + sum mu_j grad g_j(z) = 0`, `g_j(z) = 0` by Newton's
/// method with finite-difference constraint Hessians.
fn kkt_newton(
    model: &QuadraticModel,
    active: &[&SmoothInequality],
    mut z: Vec<f64>,
    mut mu: Vec<f64>,
) -> Option<Vec<f64>> {
    let n = z.len();
    let m = active.len();
    if m > n {
        return None;
    }
    for _ in 0..POLISH_ITERATIONS {
        let mut jac = DMatrix::zeros(n + m, n + m);
        let mut rhs = DVector::zeros(n + m);
        for r in 0..n {
            for c in 0..n {
                jac[(r, c)] = model.hessian.as_ref().map_or(0.0, |h| h[r * n + c]);
            }
            jac[(r, r)] += model.sigma;
        }
        let gm = model.gradient_at(&z);
        for r in 0..n {
            rhs[r] = -gm[r];
        }
        for (j, g) in active.iter().enumerate() {
            let gj = g.gradient(&z);
            let hj = fd_hessian(g, &z);
            for r in 0..n {
                for c in 0..n {
                    jac[(r, c)] += mu[j] * hj[r * n + c];
                }
                jac[(r, n + j)] = gj[r];
                jac[(n + j, r)] = gj[r];
                rhs[r] -= mu[j] * gj[r];
            }
            rhs[n + j] = -g.evaluate(&z);
        }
        let d = jac.lu().solve(&rhs)?;
        for r in 0..n {
            z[r] += d[r];
        }
        for j in 0..m {
            mu[j] += d[n + j];
        }
        if !z.iter().chain(&mu).all(|v| v.is_finite()) {
            return None;
        }
        let dz = (0..n).map(|r| d[r] * d[r]).sum::<f64>().sqrt();
        if dz <= 4.0 * f64::EPSILON * (1.0 + norm(&z)) {
            break;
        }
    }
    mu.iter().all(|&v| v >= 0.0).then_some(z)
}

/// Central-difference Hessian of a constraint from its gradient.
fn fd_hessian(g: &SmoothInequality, z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut h = vec![0.0; n * n];
    for c in 0..n {
        let step = 1e-6 * (1.0 + z[c].abs());
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[c] += step;
        zm[c] -= step;
        let (gp, gm) = (g.gradient(&zp), g.gradient(&zm));
        for r in 0..n {
            h[r * n + c] = (gp[r] - gm[r]) / (2.0 * step);
        }
    }
    for r in 0..n {
        for c in 0..r {
            let avg = 0.5 * (h[r * n + c] + h[c * n + r]);
            h[r * n + c] = avg;
            h[c * n + r] = avg;
        }
    }
    h
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
