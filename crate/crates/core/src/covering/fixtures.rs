//! Named covers used by tests, benches and the acceptance suite.

use rand::Rng;

use super::{CoveringSet, OpenCover, Region, SmoothInequality};

/// `phi(z) = (z1 z2)^2` when both coordinates are nonnegative and
/// `-(z1 z2)^2` otherwise. `phi <= 0` removes the open first quadrant, and
/// the gradient vanishes along both axes.
pub fn kink_constraint() -> SmoothInequality {
    SmoothInequality::new(
        "kink",
        |x: &[f64]| {
            let p = x[0] * x[1];
            if x[0] >= 0.0 && x[1] >= 0.0 {
                p * p
            } else {
                -p * p
            }
        },
        |x: &[f64]| {
            let s = if x[0] >= 0.0 && x[1] >= 0.0 {
                1.0
            } else {
                -1.0
            };
            vec![s * 2.0 * x[0] * x[1] * x[1], s * 2.0 * x[0] * x[0] * x[1]]
        },
    )
}

fn lower(label: &str, k: usize, v: f64) -> SmoothInequality {
    let mut n = vec![0.0; 2];
    n[k] = -1.0;
    SmoothInequality::linear(label, n, -v)
}

fn upper(label: &str, k: usize, v: f64) -> SmoothInequality {
    let mut n = vec![0.0; 2];
    n[k] = 1.0;
    SmoothInequality::linear(label, n, v)
}

fn open_box(lo: [f64; 2], hi: [f64; 2], constraints: Vec<SmoothInequality>) -> CoveringSet {
    CoveringSet::new(
        Region::open_box(lo.to_vec(), hi.to_vec()).expect("fixture box"),
        constraints,
    )
    .expect("fixture set")
}

/// `[-1,1]^2` minus the half-open quadrant `(0,1]^2`.
pub fn l_shape_contains(x: &[f64]) -> bool {
    let in_square = x.iter().all(|v| (-1.0..=1.0).contains(v));
    in_square && !(x[0] > 0.0 && x[1] > 0.0)
}

/// Cover of the L-shaped square in which the reentrant corner is handled by
/// the kink constraint on a small ball and everything else by boxes with
/// linear constraints.
pub fn l_shape_kink_cover() -> OpenCover {
    let kink = CoveringSet::new(
        Region::ball(vec![0.0, 0.0], 0.3).expect("fixture ball"),
        vec![kink_constraint()],
    )
    .expect("fixture set");
    OpenCover::new(vec![
        open_box(
            [-1.2, -1.2],
            [1.2, -0.1],
            vec![
                lower("x1>=-1", 0, -1.0),
                upper("x1<=1", 0, 1.0),
                lower("x2>=-1", 1, -1.0),
            ],
        ),
        open_box(
            [-1.2, -1.2],
            [-0.1, 1.2],
            vec![
                lower("x1>=-1", 0, -1.0),
                lower("x2>=-1", 1, -1.0),
                upper("x2<=1", 1, 1.0),
            ],
        ),
        kink,
        open_box(
            [0.05, -0.5],
            [1.2, 0.5],
            vec![upper("x1<=1", 0, 1.0), upper("x2<=0", 1, 0.0)],
        ),
        open_box(
            [-0.5, 0.05],
            [0.5, 1.2],
            vec![upper("x1<=0", 0, 0.0), upper("x2<=1", 1, 1.0)],
        ),
    ])
}

/// Single open box `(1,3) x (-1,1)` whose constraints pin `x1` to `{1, 2}`.
/// Only the line `x1 = 2` lies in the open box, so minimizers on `x1 = 1`
/// are feasible for the subproblem but outside the covered set.
pub fn pathological_cover() -> OpenCover {
    let q = |x: &[f64]| (x[0] - 1.0) * (x[0] - 2.0);
    let dq = |x: &[f64]| vec![2.0 * x[0] - 3.0, 0.0];
    OpenCover::new(vec![open_box(
        [1.0, -1.0],
        [3.0, 1.0],
        vec![
            SmoothInequality::new("(x-1)(x-2)<=0", q, dq),
            SmoothInequality::new(
                "-(x-1)(x-2)<=0",
                move |x: &[f64]| -q(x),
                move |x: &[f64]| dq(x).into_iter().map(|v| -v).collect(),
            ),
            SmoothInequality::new(
                "y^2<=1/4",
                |x: &[f64]| x[1] * x[1] - 0.25,
                |x: &[f64]| vec![0.0, 2.0 * x[1]],
            ),
        ],
    )])
}

/// The set actually covered by [`pathological_cover`].
pub fn pathological_omega_contains(x: &[f64]) -> bool {
    x[0] == 2.0 && x[1].abs() <= 0.5
}

/// A disk of random center and radius, optionally cut by a random half-plane
/// through its interior, covered by a 2x2 grid of overlapping open boxes.
pub fn random_disk_domain<R: Rng + ?Sized>(rng: &mut R) -> OpenCover {
    let c = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
    let r: f64 = rng.random_range(0.5..1.0);
    let mut constraints = vec![SmoothInequality::new(
        "disk",
        move |x: &[f64]| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) - r * r,
        move |x: &[f64]| vec![2.0 * (x[0] - c[0]), 2.0 * (x[1] - c[1])],
    )];
    if rng.random_bool(0.5) {
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let n = vec![angle.cos(), angle.sin()];
        let offset = n[0] * c[0] + n[1] * c[1] + rng.random_range(-0.5..0.5) * r;
        constraints.push(SmoothInequality::linear("cut", n, offset));
    }
    let lo = [c[0] - r - 0.1, c[1] - r - 0.1];
    let hi = [c[0] + r + 0.1, c[1] + r + 0.1];
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let overlap = 0.2;
    let mut sets = Vec::with_capacity(4);
    for (a_lo, a_hi) in [(lo[0], mid[0] + overlap), (mid[0] - overlap, hi[0])] {
        for (b_lo, b_hi) in [(lo[1], mid[1] + overlap), (mid[1] - overlap, hi[1])] {
            sets.push(open_box([a_lo, b_lo], [a_hi, b_hi], constraints.clone()));
        }
    }
    OpenCover::new(sets)
}

/// Rejection sample of a covered point of a [`random_disk_domain`].
pub fn random_disk_point<R: Rng + ?Sized>(cover: &OpenCover, rng: &mut R) -> Vec<f64> {
    let (lo, hi) = cover.sets.iter().fold(
        (vec![f64::INFINITY; 2], vec![f64::NEG_INFINITY; 2]),
        |(mut lo, mut hi), s| {
            let (l, h) = s.sample_box();
            for k in 0..2 {
                lo[k] = lo[k].min(l[k]);
                hi[k] = hi[k].max(h[k]);
            }
            (lo, hi)
        },
    );
    loop {
        let x = vec![
            rng.random_range(lo[0]..hi[0]),
            rng.random_range(lo[1]..hi[1]),
        ];
        if cover.feasibility_witness(&x).is_some() {
            return x;
        }
    }
}

/// Largest relative deviation between the analytic gradient and central
/// differences with step `1e-6`, normalized by `max(|grad|, 1e-3)`.
pub fn gradient_error(g: &SmoothInequality, x: &[f64]) -> f64 {
    let h = 1e-6;
    let analytic = g.gradient(x);
    let mut err: f64 = 0.0;
    let scale = super::norm(&analytic).max(1e-3);
    for k in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let fd = (g.evaluate(&xp) - g.evaluate(&xm)) / (2.0 * h);
        err = err.max((fd - analytic[k]).abs() / scale);
    }
    err
}

/// Cover of a convex polygon, given counterclockwise, by one open box around
/// it carrying one linear constraint per edge.
pub fn convex_polygon_cover(vertices: &[[f64; 2]]) -> OpenCover {
    let n = vertices.len();
    let mut constraints = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b) = (vertices[k], vertices[(k + 1) % n]);
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let len = ex.hypot(ey);
        let normal = vec![ey / len, -ex / len];
        let offset = normal[0] * a[0] + normal[1] * a[1];
        constraints.push(SmoothInequality::linear(format!("edge{k}"), normal, offset));
    }
    let lo = [0, 1].map(|d| vertices.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min) - 0.1);
    let hi = [0, 1].map(|d| {
        vertices
            .iter()
            .map(|v| v[d])
            .fold(f64::NEG_INFINITY, f64::max)
            + 0.1
    });
    OpenCover::new(vec![open_box(lo, hi, constraints)])
}
