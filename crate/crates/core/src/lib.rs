//! Block coordinate descent for problems whose blocks live in nonconvex sets
//! described by open covers with local smooth constraints, applied to a
//! continuous traveling salesman problem over polygons.
//!
//! - [`geometry`]: points, polygons, containment, clipping, preprocessing.
//! - [`covering`]: open covers, regularized block subproblems, multiplier
//!   estimates and approximate KKT checks.
//! - [`bcd`]: the regularized block coordinate descent driver and its audits.
//! - [`ctsp`]: route length, the global block oracle and the tour problem.
//! - [`heuristics`]: cheapest insertion and relocation local search.
//! - [`io`]: instance files, random instances and SVG rendering.

pub mod bcd;
pub mod covering;
pub mod ctsp;
pub mod geometry;
pub mod heuristics;
pub mod io;
pub mod nnls;

pub use bcd::{
    run_bcd, BcdConfig, BcdError, BcdOutcome, BlockProblem, IterationRecord, StopReason,
};
pub use covering::{
    CoveringError, CoveringSet, OpenCover, QuadraticModel, Region, SmoothInequality,
};
pub use ctsp::{optimize_points, route_length, CtspError, Instance, OracleParams, Tour};
pub use geometry::{GeometryError, Point2, Polygon, Segment};
pub use heuristics::{solve, HeuristicConfig, HeuristicError, SearchStats, SolveOutcome};
pub use io::{load_instance, save_instance, IoError};

/// Any failure raised by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Covering(#[from] CoveringError),
    #[error(transparent)]
    Bcd(#[from] BcdError),
    #[error(transparent)]
    Ctsp(#[from] CtspError),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error(transparent)]
    Io(#[from] IoError),
}
