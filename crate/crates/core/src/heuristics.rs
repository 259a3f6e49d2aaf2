//! Visiting-order heuristics on top of the point optimizer: cheapest
//! insertion to build a tour, then first-improvement relocation.
//!
//! Every candidate order is scored by optimizing its points with block
//! coordinate descent, warm-started from the incumbent's points.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bcd::BcdConfig;
use crate::ctsp::{
    neighbors, optimize_points, route_length_of, solve_block_global, CtspError, Instance,
    OracleParams, PointsOutcome, Tour,
};
use crate::geometry::{Point2, Polygon};

/// Relative margin by which a neighbor must beat the incumbent.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-9;

/// Largest instance accepted by [`exhaustive_best_tour`].
pub const EXHAUSTIVE_LIMIT: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeuristicError {
    #[error(transparent)]
    Ctsp(#[from] CtspError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("exhaustive search supports at most {EXHAUSTIVE_LIMIT} cities, got {0}")]
    TooManyCities(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicConfig {
    pub bcd: BcdConfig,
    pub oracle: OracleParams,
    /// Worker threads for neighbor evaluation; 1 evaluates sequentially.
    pub threads: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            bcd: BcdConfig::default(),
            oracle: OracleParams::default(),
            threads: 1,
        }
    }
}

/// One row of the search log: an accepted move, the construction, or the
/// final unsuccessful scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub iter: usize,
    pub route_length: f64,
    /// Point optimizations run for this row.
    pub calls: usize,
    /// BCD cycles spent by those optimizations.
    pub cycles: usize,
    pub accum_calls: usize,
    pub accum_cycles: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchStats {
    pub rows: Vec<SearchRow>,
    pub wall_time: Duration,
}

impl SearchStats {
    pub fn push(&mut self, route_length: f64, calls: usize, cycles: usize) {
        let (ac, acy) = self
            .rows
            .last()
            .map_or((0, 0), |r| (r.accum_calls, r.accum_cycles));
        self.rows.push(SearchRow {
            iter: self.rows.len(),
            route_length,
            calls,
            cycles,
            accum_calls: ac + calls,
            accum_cycles: acy + cycles,
        });
    }

    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    pub fn total_calls(&self) -> usize {
        self.rows.last().map_or(0, |r| r.accum_calls)
    }

    pub fn total_cycles(&self) -> usize {
        self.rows.last().map_or(0, |r| r.accum_cycles)
    }

    /// CSV with columns `iter,route_length,calls,cycles,accum_calls,accum_cycles`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,route_length,calls,cycles,accum_calls,accum_cycles\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{},{},{},{}",
                r.iter, r.route_length, r.calls, r.cycles, r.accum_calls, r.accum_cycles
            );
        }
        out
    }

    /// Fixed-width table with route lengths to 2 decimals.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>5} {:>16} {:>10} {:>12} {:>12} {:>14}\n",
            "iter", "route length", "calls", "cycles", "acc. calls", "acc. cycles"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>5} {:>16.2} {:>10} {:>12} {:>12} {:>14}",
                r.iter, r.route_length, r.calls, r.cycles, r.accum_calls, r.accum_cycles
            );
        }
        out
    }
}

/// Point of `city`'s polygon nearest the midpoint of its new neighbors,
/// ties going to its previous point.
fn warm_start(
    instance: &Instance,
    perm: &[usize],
    pos: usize,
    points: &[Point2],
    oracle: &OracleParams,
) -> Point2 {
    let city = perm[pos];
    let (a, b) = neighbors(perm, pos);
    let mid = points[a].midpoint(points[b]);
    solve_block_global(mid, mid, instance.polygon(city), points[city], oracle).point
}

fn evaluate(
    instance: &Instance,
    perm: &[usize],
    moved_pos: usize,
    points: &[Point2],
    config: &HeuristicConfig,
) -> Result<PointsOutcome, CtspError> {
    let mut x0 = points.to_vec();
    x0[perm[moved_pos]] = warm_start(instance, perm, moved_pos, points, &config.oracle);
    optimize_points(instance, perm, &x0, &config.bcd, &config.oracle)
}

/// Cheapest insertion. Cities 1 and 2 start at seeded random interior
/// points and are optimized as a pair; then each further city `k` is tried
/// at each of the `k` insertion positions of the current order (before the
/// first city, between consecutive cities, after the last), keeping the
/// position with the shortest optimized tour.
///
/// The returned stats hold one row counting the insertion candidates.
pub fn constructive_insertion(
    instance: &Instance,
    config: &HeuristicConfig,
    seed: u64,
) -> Result<(Tour, SearchStats), HeuristicError> {
    let started = Instant::now();
    let p = instance.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Point2> = instance
        .polygons()
        .iter()
        .map(Polygon::interior_point)
        .collect();
    points[0] = instance.polygon(0).sample_interior(&mut rng);
    points[1] = instance.polygon(1).sample_interior(&mut rng);
    let mut perm = vec![0, 1];
    let pair = optimize_points(instance, &perm, &points, &config.bcd, &config.oracle)?;
    points = pair.points;
    let mut length = pair.route_length;
    let (mut calls, mut cycles) = (0, 0);

    for city in 2..p {
        let candidates: Vec<Vec<usize>> = (0..=perm.len())
            .map(|t| {
                let mut c = perm.clone();
                c.insert(t, city);
                c
            })
            .collect();
        let positions: Vec<usize> = (0..=perm.len()).collect();
        let outcomes = run_batch(config, &candidates, |k| {
            evaluate(instance, &candidates[k], positions[k], &points, config)
        })?;
        let mut best: Option<(usize, PointsOutcome)> = None;
        for (k, out) in outcomes.into_iter().enumerate() {
            calls += 1;
            cycles += out.bcd.cycles;
            if best
                .as_ref()
                .is_none_or(|(_, b)| out.route_length < b.route_length)
            {
                best = Some((k, out));
            }
        }
        let (k, out) = best.expect("at least one insertion position");
        perm = candidates[k].clone();
        points = out.points;
        length = out.route_length;
    }
    let mut stats = SearchStats::default();
    stats.push(length, calls, cycles);
    stats.wall_time = started.elapsed();
    Ok((Tour::new(perm, points)?, stats))
}

/// Relocation neighborhood in scan order, as `(s, t)` pairs of 0-based
/// positions: the city at position `s` is removed and reinserted before the
/// city at index `t` of the shortened order. Of the `p - 1` gaps of the
/// shortened closed tour the one the city came from is skipped, leaving
/// `p - 2` moves per position.
pub fn scan_order(p: usize) -> Vec<(usize, usize)> {
    if p < 3 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(p * (p - 2));
    for s in 0..p {
        let home = s % (p - 1);
        out.extend((0..p - 1).filter(|&t| t != home).map(|t| (s, t)));
    }
    out
}

/// Order obtained by moving the city at position `s` before index `t` of
/// the order without it.
pub fn relocate(perm: &[usize], s: usize, t: usize) -> Vec<usize> {
    let mut r = perm.to_vec();
    let city = r.remove(s);
    r.insert(t, city);
    r
}

fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent - IMPROVEMENT_TOLERANCE * (1.0 + incumbent)
}

/// Evaluates `n` candidates with `f`, in parallel when configured. Results
/// come back in candidate order.
fn run_batch<T, F>(
    config: &HeuristicConfig,
    items: &[T],
    f: F,
) -> Result<Vec<PointsOutcome>, HeuristicError>
where
    T: Sync,
    F: Fn(usize) -> Result<PointsOutcome, CtspError> + Sync,
{
    if config.threads <= 1 || items.len() < 2 {
        return Ok((0..items.len()).map(&f).collect::<Result<_, _>>()?);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| HeuristicError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| {
        (0..items.len())
            .into_par_iter()
            .map(&f)
            .collect::<Result<Vec<_>, _>>()
    })?)
}

/// First-improvement relocation search. The scan walks [`scan_order`]
/// cyclically, continuing after each accepted move from the next pair, and
/// stops once a full scan's worth of consecutive neighbors has failed to
/// improve. One row is appended per accepted move and one for the final
/// unsuccessful scan.
///
/// With several threads, neighbors are evaluated in batches and the first
/// improving one in scan order is accepted; counts match a sequential run.
pub fn relocation_local_search(
    tour0: Tour,
    instance: &Instance,
    config: &HeuristicConfig,
    mut stats: SearchStats,
) -> Result<(Tour, SearchStats), HeuristicError> {
    let started = Instant::now();
    let p = tour0.perm.len();
    let order = scan_order(p);
    let n = order.len();
    let mut perm = tour0.perm;
    let mut points = tour0.points;
    let mut length = route_length_of(&perm, &points);
    let batch = if config.threads <= 1 {
        1
    } else {
        4 * config.threads
    };
    let (mut idx, mut fails, mut calls, mut cycles) = (0, 0, 0, 0);

    'scan: while fails < n {
        let take = batch.min(n - fails);
        let pairs: Vec<(usize, usize)> = (0..take).map(|j| order[(idx + j) % n]).collect();
        let candidates: Vec<Vec<usize>> =
            pairs.iter().map(|&(s, t)| relocate(&perm, s, t)).collect();
        let outcomes = run_batch(config, &candidates, |k| {
            evaluate(instance, &candidates[k], pairs[k].1, &points, config)
        })?;
        for (k, out) in outcomes.into_iter().enumerate() {
            calls += 1;
            cycles += out.bcd.cycles;
            if improves(out.route_length, length) {
                perm = candidates[k].clone();
                points = out.points;
                length = out.route_length;
                stats.push(length, calls, cycles);
                idx = (idx + k + 1) % n;
                fails = 0;
                calls = 0;
                cycles = 0;
                continue 'scan;
            }
            fails += 1;
        }
        idx = (idx + take) % n;
    }
    stats.push(length, calls, cycles);
    stats.wall_time += started.elapsed();
    Ok((Tour::new(perm, points)?, stats))
}

/// Output of the full pipeline.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub tour: Tour,
    pub constructed_length: f64,
    pub route_length: f64,
    pub stats: SearchStats,
}

/// Cheapest insertion followed by relocation search.
pub fn solve(
    instance: &Instance,
    config: &HeuristicConfig,
    seed: u64,
) -> Result<SolveOutcome, HeuristicError> {
    let (tour, stats) = constructive_insertion(instance, config, seed)?;
    let constructed_length = stats.rows[0].route_length;
    let (tour, stats) = relocation_local_search(tour, instance, config, stats)?;
    Ok(SolveOutcome {
        route_length: route_length_of(&tour.perm, &tour.points),
        tour,
        constructed_length,
        stats,
    })
}

/// Re-evaluates every relocation neighbor of `tour` from scratch and returns
/// the first one, in scan order, that improves on it.
pub fn improving_relocation(
    tour: &Tour,
    instance: &Instance,
    config: &HeuristicConfig,
) -> Result<Option<(usize, usize, f64)>, HeuristicError> {
    let length = route_length_of(&tour.perm, &tour.points);
    let order = scan_order(tour.perm.len());
    let candidates: Vec<Vec<usize>> = order
        .iter()
        .map(|&(s, t)| relocate(&tour.perm, s, t))
        .collect();
    let outcomes = run_batch(config, &candidates, |k| {
        evaluate(instance, &candidates[k], order[k].1, &tour.points, config)
    })?;
    Ok(outcomes
        .iter()
        .zip(&order)
        .find(|(o, _)| improves(o.route_length, length))
        .map(|(o, &(s, t))| (s, t, o.route_length)))
}

/// Best tour over all `(p - 1)! / 2` distinct closed orders, each scored by
/// optimizing its points from `x0`.
pub fn exhaustive_best_tour(
    instance: &Instance,
    x0: &[Point2],
    config: &HeuristicConfig,
) -> Result<Tour, HeuristicError> {
    let p = instance.len();
    if p > EXHAUSTIVE_LIMIT {
        return Err(HeuristicError::TooManyCities(p));
    }
    let mut orders = Vec::new();
    let mut rest: Vec<usize> = (1..p).collect();
    permutations(&mut rest, 0, &mut |r| {
        // one direction of each cycle through city 0
        if r.len() < 2 || r[0] < r[r.len() - 1] {
            let mut perm = vec![0];
            perm.extend_from_slice(r);
            orders.push(perm);
        }
    });
    let outcomes = run_batch(config, &orders, |k| {
        optimize_points(instance, &orders[k], x0, &config.bcd, &config.oracle)
    })?;
    let (k, best) = outcomes
        .into_iter()
        .enumerate()
        .min_by(|a, b| a.1.route_length.total_cmp(&b.1.route_length))
        .expect("at least one order");
    Ok(Tour::new(orders[k].clone(), best.points)?)
}

fn permutations(v: &mut [usize], k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, visit);
        v.swap(k, i);
    }
}
