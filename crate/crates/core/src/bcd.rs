//! Block coordinate descent with regularized trial points and a
//! sufficient-descent test.
//!
//! Each iteration updates one block. With `sigma = 0` a problem may offer the
//! exact global minimizer of its block; otherwise a trial minimizing the
//! regularized quadratic model is requested. A trial is accepted when
//! `f(trial) <= f(x) - alpha |step|^2`, and `sigma` is doubled (from
//! `sigma_min`) after every rejection.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covering::{
    self, alternative1_trial, check_alternative1, estimate_multipliers, lagrangian_residual,
    Alt1Check, CoveringError, GridParams, MultiplierRecord, OpenCover, QuadraticModel,
    SmoothInequality,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BcdError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("block {block}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        block: usize,
        expected: usize,
        got: usize,
    },
    #[error("block {block}: oracle produced no trial: {reason}")]
    Oracle { block: usize, reason: String },
    #[error("block {block}: objective is not differentiable at the current point")]
    NonSmooth { block: usize },
    #[error(
        "block {block}: sigma reached {sigma:e} without sufficient descent; \
         the block gradient is probably not Lipschitz"
    )]
    RunawaySigma { block: usize, sigma: f64 },
    #[error("block {block}: hessian policy is user-supplied but the problem provides none")]
    MissingHessian { block: usize },
    #[error(transparent)]
    Covering(#[from] CoveringError),
}

/// Multipliers fitted at an accepted point together with the constraints
/// they refer to.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub record: MultiplierRecord,
    pub constraints: Vec<SmoothInequality>,
}

/// Candidate point for one block, optionally certified.
#[derive(Debug, Clone)]
pub struct BlockTrial {
    pub point: Vec<f64>,
    pub certificate: Option<Certificate>,
}

impl BlockTrial {
    pub fn uncertified(point: Vec<f64>) -> Self {
        Self {
            point,
            certificate: None,
        }
    }
}

/// An objective split into blocks, each with its own feasible set and
/// subproblem oracles. Blocks are indexed from 0.
pub trait BlockProblem: Sync {
    fn n_blocks(&self) -> usize;

    fn block_dim(&self, i: usize) -> usize;

    fn value(&self, x: &[Vec<f64>]) -> f64;

    fn block_gradient(&self, x: &[Vec<f64>], i: usize) -> Result<Vec<f64>, BcdError>;

    /// `f(x with block i replaced by trial) - f(x)`. Problems whose objective
    /// is a sum of local terms should override this with a local difference,
    /// which avoids cancellation in the sufficient-descent test.
    fn value_change(&self, x: &[Vec<f64>], i: usize, trial: &[f64]) -> f64 {
        let mut y = x.to_vec();
        y[i] = trial.to_vec();
        self.value(&y) - self.value(x)
    }

    /// Global minimizer of `f` over block `i` with the other blocks fixed,
    /// when the problem can afford one.
    fn exact_block_minimizer(
        &self,
        _x: &[Vec<f64>],
        _i: usize,
    ) -> Option<Result<BlockTrial, BcdError>> {
        None
    }

    /// Minimizer of the regularized model over the feasible set of block `i`.
    fn model_block_minimizer(
        &self,
        x: &[Vec<f64>],
        i: usize,
        model: &QuadraticModel,
        delta: f64,
    ) -> Result<BlockTrial, BcdError>;

    /// Symmetric model Hessian for block `i`, row-major.
    fn block_hessian(&self, _x: &[Vec<f64>], _i: usize) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HessianPolicy {
    Zero,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleMode {
    /// Exact block minimization at `sigma = 0` when available.
    Alt2First,
    /// Always use the regularized model.
    Alt1Only,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdConfig {
    pub alpha: f64,
    pub delta: f64,
    pub theta: f64,
    pub sigma_min: f64,
    pub hessian: HessianPolicy,
    /// Sup-norm below which a block update counts as a repetition.
    pub stop_tol: f64,
    pub max_cycles: usize,
    pub mode: OracleMode,
    /// Keep the full iterate at the end of every cycle.
    pub keep_cycle_snapshots: bool,
}

impl Default for BcdConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-8,
            delta: 1e-6,
            theta: 1.0,
            sigma_min: 1.0,
            hessian: HessianPolicy::Zero,
            stop_tol: 0.0,
            max_cycles: 1000,
            mode: OracleMode::Alt2First,
            keep_cycle_snapshots: false,
        }
    }
}

impl BcdConfig {
    pub fn validate(&self) -> Result<(), BcdError> {
        let bad = |m: &str| Err(BcdError::InvalidConfig(m.into()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad("delta must be nonnegative");
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return bad("theta must be positive");
        }
        if !(self.sigma_min > 0.0 && self.sigma_min.is_finite()) {
            return bad("sigma_min must be positive");
        }
        if self.stop_tol.is_nan() || self.stop_tol < 0.0 {
            return bad("stop_tol must be nonnegative");
        }
        Ok(())
    }
}

/// Factor over `sigma_min` at which the regularization loop gives up.
pub const RUNAWAY_SIGMA_FACTOR: f64 = 1e12;

/// Relative size of a model decrease treated as below the rounding of the
/// objective. A model trial with non-positive model value that fails the
/// descent test with a smaller predicted decrease ends the iteration with a
/// null step.
pub const NULL_STEP_RESOLUTION: f64 = 64.0 * f64::EPSILON;

/// 1-based cyclic block schedule: `k = 0` selects block 1.
pub fn choose_block(k: usize, n_blocks: usize) -> usize {
    k % n_blocks + 1
}

pub fn sufficient_descent(f_trial: f64, f_current: f64, alpha: f64, step_norm: f64) -> bool {
    f_trial <= f_current - alpha * step_norm * step_norm
}

pub fn sigma_update(sigma: f64, sigma_min: f64) -> f64 {
    sigma_min.max(2.0 * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    /// The block was left in place because the model decrease of the trial
    /// was below the rounding of the objective.
    Null = 0,
    Model = 1,
    Exact = 2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// 0-based block index.
    pub i_k: usize,
    pub sigma_k: f64,
    pub n_sigma_increases: usize,
    /// Objective after the iteration.
    pub f_value: f64,
    pub step_norm: f64,
    pub alternative: Alternative,
    pub f_evals: usize,
    /// Outcome of the model-trial conditions when the trial carried
    /// multipliers; `None` for exact trials and uncertified ones. For null
    /// steps it refers to the discarded trial.
    pub alt1_passed: Option<bool>,
}

/// Iterate plus the bookkeeping carried between iterations.
#[derive(Debug, Clone)]
pub struct BcdState {
    pub x: Vec<Vec<f64>>,
    pub k: usize,
    pub f: f64,
    pub trace: Vec<IterationRecord>,
    /// Certificate from each block's most recent update.
    pub certificates: Vec<Option<Certificate>>,
}

impl BcdState {
    pub fn new<P: BlockProblem + ?Sized>(problem: &P, x0: Vec<Vec<f64>>) -> Result<Self, BcdError> {
        let n = problem.n_blocks();
        if x0.len() != n {
            return Err(BcdError::InvalidConfig(format!(
                "expected {n} blocks, got {}",
                x0.len()
            )));
        }
        for (i, xi) in x0.iter().enumerate() {
            if xi.len() != problem.block_dim(i) {
                return Err(BcdError::DimensionMismatch {
                    block: i,
                    expected: problem.block_dim(i),
                    got: xi.len(),
                });
            }
        }
        let f = problem.value(&x0);
        Ok(Self {
            x: x0,
            k: 0,
            f,
            trace: Vec::new(),
            certificates: vec![None; n],
        })
    }
}

/// One accepted iteration. The state's objective value is advanced by the
/// problem's `value_change`, so the recorded values satisfy the descent test
/// exactly as it was evaluated.
pub fn bcd_iterate<P: BlockProblem + ?Sized>(
    state: &mut BcdState,
    config: &BcdConfig,
    problem: &P,
) -> Result<IterationRecord, BcdError> {
    let n = problem.n_blocks();
    let i = choose_block(state.k, n) - 1;
    let xi = state.x[i].clone();
    let mut sigma = 0.0;
    let mut n_inc = 0;
    let mut f_evals = 0;
    let mut grad: Option<Vec<f64>> = None;
    let hessian = match config.hessian {
        HessianPolicy::Zero => None,
        HessianPolicy::User => Some(
            problem
                .block_hessian(&state.x, i)
                .ok_or(BcdError::MissingHessian { block: i })?,
        ),
    };

    loop {
        let exact = if sigma == 0.0 && config.mode == OracleMode::Alt2First {
            problem.exact_block_minimizer(&state.x, i)
        } else {
            None
        };
        let (trial, alternative, check, predicted) = match exact {
            Some(t) => (t?, Alternative::Exact, None, None),
            None => {
                if grad.is_none() {
                    grad = Some(problem.block_gradient(&state.x, i)?);
                }
                let mut model =
                    QuadraticModel::new(grad.clone().unwrap_or_default(), sigma, xi.clone());
                if let Some(h) = &hessian {
                    model = model.with_hessian(h.clone())?;
                }
                let trial = problem.model_block_minimizer(&state.x, i, &model, config.delta)?;
                let check = trial.certificate.as_ref().map(|c| {
                    let s = covering::dist(&trial.point, &xi);
                    check_alternative1(
                        &model,
                        &trial.point,
                        &c.record,
                        config.theta,
                        config.delta,
                        s,
                    )
                });
                let predicted = model.value(&trial.point);
                (trial, Alternative::Model, check, Some(predicted))
            }
        };
        if trial.point.len() != xi.len() {
            return Err(BcdError::DimensionMismatch {
                block: i,
                expected: xi.len(),
                got: trial.point.len(),
            });
        }
        let change = problem.value_change(&state.x, i, &trial.point);
        f_evals += 1;
        let step = covering::dist(&trial.point, &xi);
        let f_next = state.f + change;
        if sufficient_descent(f_next, state.f, config.alpha, step) {
            let record = IterationRecord {
                k: state.k,
                i_k: i,
                sigma_k: sigma,
                n_sigma_increases: n_inc,
                f_value: f_next,
                step_norm: step,
                alternative,
                f_evals,
                alt1_passed: check.as_ref().map(Alt1Check::passed),
            };
            state.x[i] = trial.point;
            if trial.certificate.is_some() || step > 0.0 {
                state.certificates[i] = trial.certificate;
            }
            state.f = f_next;
            state.k += 1;
            state.trace.push(record.clone());
            return Ok(record);
        }
        let resolution = NULL_STEP_RESOLUTION * (1.0 + state.f.abs());
        if predicted.is_some_and(|m| (-resolution..=0.0).contains(&m)) {
            let record = IterationRecord {
                k: state.k,
                i_k: i,
                sigma_k: sigma,
                n_sigma_increases: n_inc,
                f_value: state.f,
                step_norm: 0.0,
                alternative: Alternative::Null,
                f_evals,
                alt1_passed: check.as_ref().map(Alt1Check::passed),
            };
            state.k += 1;
            state.trace.push(record.clone());
            return Ok(record);
        }
        sigma = sigma_update(sigma, config.sigma_min);
        n_inc += 1;
        if sigma > RUNAWAY_SIGMA_FACTOR * config.sigma_min {
            return Err(BcdError::RunawaySigma { block: i, sigma });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// A full cycle of consecutive updates left every block in place.
    Repetition,
    MaxCycles,
}

#[derive(Debug, Clone)]
pub struct BcdOutcome {
    pub x: Vec<Vec<f64>>,
    pub f_initial: f64,
    /// Objective as tracked through accepted value changes.
    pub f_final: f64,
    pub trace: Vec<IterationRecord>,
    pub stop: StopReason,
    /// Number of started cycles.
    pub cycles: usize,
    /// Objective at the end of each completed cycle, and at the stop.
    pub cycle_values: Vec<f64>,
    /// Iterate at the start and at the end of each cycle when requested.
    pub snapshots: Vec<Vec<Vec<f64>>>,
    pub certificates: Vec<Option<Certificate>>,
}

fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Runs until `n_blocks` consecutive updates are repetitions (within
/// `stop_tol` in the sup-norm) or `max_cycles` cycles have been performed.
pub fn run_bcd<P: BlockProblem + ?Sized>(
    problem: &P,
    x0: Vec<Vec<f64>>,
    config: &BcdConfig,
) -> Result<BcdOutcome, BcdError> {
    config.validate()?;
    let n = problem.n_blocks();
    let mut state = BcdState::new(problem, x0)?;
    let f_initial = state.f;
    let mut snapshots = Vec::new();
    if config.keep_cycle_snapshots {
        snapshots.push(state.x.clone());
    }
    let mut cycle_values = Vec::new();
    let mut repeats = 0;
    let max_iters = config.max_cycles.saturating_mul(n);
    let mut stop = StopReason::MaxCycles;
    while state.k < max_iters {
        let i = choose_block(state.k, n) - 1;
        let before = state.x[i].clone();
        bcd_iterate(&mut state, config, problem)?;
        if sup_norm_diff(&before, &state.x[i]) <= config.stop_tol {
            repeats += 1;
        } else {
            repeats = 0;
        }
        let cycle_end = state.k % n == 0;
        let done = repeats >= n;
        if cycle_end || done {
            cycle_values.push(state.f);
            if config.keep_cycle_snapshots {
                snapshots.push(state.x.clone());
            }
        }
        if done {
            stop = StopReason::Repetition;
            break;
        }
    }
    Ok(BcdOutcome {
        cycles: state.k.div_ceil(n),
        x: state.x,
        f_initial,
        f_final: state.f,
        trace: state.trace,
        stop,
        cycle_values,
        snapshots,
        certificates: state.certificates,
    })
}

/// Upper bound on the number of `sigma` increases in one iteration.
pub fn lemma1_bound(gamma: f64, c_b: f64, alpha: f64, sigma_min: f64) -> f64 {
    ((gamma + c_b + 2.0 * alpha) / sigma_min).log2() + 1.0
}

/// Upper bound on every accepted `sigma`.
pub fn sigma_max_bound(gamma: f64, c_b: f64, alpha: f64) -> f64 {
    2.0 * (gamma + c_b + 2.0 * alpha)
}

/// Upper bound on the number of iterations whose step exceeds `epsilon`.
pub fn lemma2_count_bound(f0: f64, f_bound: f64, alpha: f64, epsilon: f64) -> f64 {
    (f0 - f_bound) / (alpha * epsilon * epsilon)
}

/// Indices of trace records violating the sufficient-descent inequality
/// with respect to their predecessor.
pub fn descent_violations(f_initial: f64, trace: &[IterationRecord], alpha: f64) -> Vec<usize> {
    let mut prev = f_initial;
    let mut bad = Vec::new();
    for (idx, r) in trace.iter().enumerate() {
        if !sufficient_descent(r.f_value, prev, alpha, r.step_norm) {
            bad.push(idx);
        }
        prev = r.f_value;
    }
    bad
}

/// Number of iterations with a step larger than `epsilon`.
pub fn large_step_count(trace: &[IterationRecord], epsilon: f64) -> usize {
    trace.iter().filter(|r| r.step_norm > epsilon).count()
}

/// Indices of records whose evaluation count differs from the number of
/// `sigma` increases plus one.
pub fn evaluation_violations(trace: &[IterationRecord]) -> Vec<usize> {
    trace
        .iter()
        .enumerate()
        .filter(|(_, r)| r.f_evals != r.n_sigma_increases + 1)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCriticality {
    /// Lagrangian-gradient norm; `None` where the gradient is undefined.
    pub residual: Option<f64>,
    pub worst_complementarity: f64,
}

/// Approximate stationarity of every block at `x`, using the multipliers
/// and constraints stored at that block's last update.
pub fn criticality_report<P: BlockProblem + ?Sized>(
    problem: &P,
    x: &[Vec<f64>],
    certificates: &[Option<Certificate>],
) -> Vec<BlockCriticality> {
    (0..problem.n_blocks())
        .map(|i| {
            let grad = problem.block_gradient(x, i).ok();
            match certificates.get(i).and_then(Option::as_ref) {
                Some(c) => BlockCriticality {
                    residual: grad
                        .map(|g| lagrangian_residual(&x[i], &g, &c.constraints, &c.record.mu)),
                    worst_complementarity: c
                        .constraints
                        .iter()
                        .zip(&c.record.mu)
                        .map(|(g, m)| m.min(-g.evaluate(&x[i])))
                        .fold(0.0, f64::max),
                },
                None => BlockCriticality {
                    residual: grad.map(|g| covering::norm(&g)),
                    worst_complementarity: 0.0,
                },
            }
        })
        .collect()
}

/// CSV with columns `k,i_k,sigma_k,n_sigma_increases,f,step_norm,alternative,f_evals`;
/// `i_k` is 1-based and reals carry 17 significant digits.
pub fn trace_csv(trace: &[IterationRecord]) -> String {
    let mut out = String::from("k,i_k,sigma_k,n_sigma_increases,f,step_norm,alternative,f_evals\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{:.16e},{},{:.16e},{:.16e},{},{}",
            r.k,
            r.i_k + 1,
            r.sigma_k,
            r.n_sigma_increases,
            r.f_value,
            r.step_norm,
            r.alternative as u8,
            r.f_evals
        );
    }
    out
}

type Objective = dyn Fn(&[Vec<f64>]) -> f64 + Send + Sync;
type BlockGradient = dyn Fn(&[Vec<f64>], usize) -> Vec<f64> + Send + Sync;

/// A smooth objective whose blocks are described by open covers; trials come
/// from grid-based global minimization of the model over every covering set.
#[derive(Clone)]
pub struct CoveredProblem {
    covers: Vec<OpenCover>,
    objective: Arc<Objective>,
    gradient: Arc<BlockGradient>,
    pub grid: GridParams,
    /// Residual factor the trials are refined against.
    pub theta: f64,
}

impl CoveredProblem {
    pub fn new<F, G>(covers: Vec<OpenCover>, objective: F, gradient: G) -> Self
    where
        F: Fn(&[Vec<f64>]) -> f64 + Send + Sync + 'static,
        G: Fn(&[Vec<f64>], usize) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            covers,
            objective: Arc::new(objective),
            gradient: Arc::new(gradient),
            grid: GridParams::default(),
            theta: 1.0,
        }
    }

    pub fn cover(&self, i: usize) -> &OpenCover {
        &self.covers[i]
    }
}

impl std::fmt::Debug for CoveredProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoveredProblem")
            .field("covers", &self.covers)
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

impl BlockProblem for CoveredProblem {
    fn n_blocks(&self) -> usize {
        self.covers.len()
    }

    fn block_dim(&self, i: usize) -> usize {
        self.covers[i].dim()
    }

    fn value(&self, x: &[Vec<f64>]) -> f64 {
        (self.objective)(x)
    }

    fn block_gradient(&self, x: &[Vec<f64>], i: usize) -> Result<Vec<f64>, BcdError> {
        Ok((self.gradient)(x, i))
    }

    fn model_block_minimizer(
        &self,
        _x: &[Vec<f64>],
        i: usize,
        model: &QuadraticModel,
        delta: f64,
    ) -> Result<BlockTrial, BcdError> {
        let cover = &self.covers[i];
        let t = alternative1_trial(cover, model, self.grid, self.theta, delta)?;
        let constraints = cover.sets[t.selection.set_index].constraints.clone();
        Ok(BlockTrial {
            point: t.selection.point,
            certificate: Some(Certificate {
                record: t.record,
                constraints,
            }),
        })
    }
}

/// Certificate for a point of a covered block against the true gradient.
pub fn certify_point(
    cover: &OpenCover,
    x: &[f64],
    grad: &[f64],
    delta: f64,
) -> Result<Certificate, CoveringError> {
    let j = cover.check_covered(x)?;
    let constraints = cover.sets[j].constraints.clone();
    let record = estimate_multipliers(j, x, grad, &constraints, delta);
    Ok(Certificate {
        record,
        constraints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::fixtures::{l_shape_contains, l_shape_kink_cover};
    use crate::covering::{CoveringSet, Region};

    #[test]
    fn block_schedule() {
        assert_eq!(choose_block(0, 3), 1);
        assert_eq!(choose_block(2, 3), 3);
        assert_eq!(choose_block(3, 3), 1);
        assert_eq!(choose_block(7, 1), 1);
    }

    #[test]
    fn descent_test_is_inclusive() {
        let alpha = 1e-8;
        assert!(sufficient_descent(10.0 - alpha * 4.0, 10.0, alpha, 2.0));
        assert!(!sufficient_descent(10.0, 10.0, alpha, 0.5));
        assert!(sufficient_descent(10.0, 10.0, alpha, 0.0));
    }

    #[test]
    fn sigma_doubling() {
        assert_eq!(sigma_update(0.0, 0.5), 0.5);
        assert_eq!(sigma_update(0.5, 0.5), 1.0);
        assert_eq!(sigma_update(1.0, 0.5), 2.0);
    }

    #[test]
    fn bound_formulas() {
        let b = lemma1_bound(1.0, 0.0, 1e-8, 1e-2);
        assert!((b - (100.000002f64.log2() + 1.0)).abs() < 1e-12);
        assert!((b - 7.6439).abs() < 1e-4);
        assert_eq!(lemma1_bound(1.0, 0.5, 0.25, 2.0), 1.0);
        assert_eq!(lemma1_bound(2.0, 1.0, 0.5, 1.0), 3.0);
        assert_eq!(sigma_max_bound(1.0, 0.0, 0.0), 2.0);
        assert_eq!(sigma_max_bound(1.0, 1.0, 1.0), 8.0);
        assert_eq!(lemma2_count_bound(1.0, 0.0, 1.0, 1.0), 1.0);
        assert!((lemma2_count_bound(10.0, 0.0, 1e-8, 0.1) - 1e11).abs() < 1.0);
    }

    /// Separable `sum |x_i - c_i|^2` over boxes, with exact projection.
    struct BoxQuadratic {
        targets: Vec<Vec<f64>>,
        lo: Vec<Vec<f64>>,
        hi: Vec<Vec<f64>>,
    }

    impl BoxQuadratic {
        fn project(&self, i: usize) -> Vec<f64> {
            self.targets[i]
                .iter()
                .zip(&self.lo[i])
                .zip(&self.hi[i])
                .map(|((c, l), h)| c.clamp(*l, *h))
                .collect()
        }
    }

    impl BlockProblem for BoxQuadratic {
        fn n_blocks(&self) -> usize {
            self.targets.len()
        }
        fn block_dim(&self, i: usize) -> usize {
            self.targets[i].len()
        }
        fn value(&self, x: &[Vec<f64>]) -> f64 {
            x.iter()
                .zip(&self.targets)
                .map(|(a, c)| a.iter().zip(c).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
                .sum()
        }
        fn block_gradient(&self, x: &[Vec<f64>], i: usize) -> Result<Vec<f64>, BcdError> {
            Ok(x[i]
                .iter()
                .zip(&self.targets[i])
                .map(|(u, v)| 2.0 * (u - v))
                .collect())
        }
        fn exact_block_minimizer(
            &self,
            _x: &[Vec<f64>],
            i: usize,
        ) -> Option<Result<BlockTrial, BcdError>> {
            Some(Ok(BlockTrial::uncertified(self.project(i))))
        }
        fn model_block_minimizer(
            &self,
            x: &[Vec<f64>],
            i: usize,
            m: &QuadraticModel,
            _delta: f64,
        ) -> Result<BlockTrial, BcdError> {
            // separable model with B = 0: coordinatewise clamp of the
            // unconstrained minimizer, or the better bound when sigma = 0
            let p = x[i]
                .iter()
                .zip(&m.gradient)
                .zip(self.lo[i].iter().zip(&self.hi[i]))
                .map(|((xi, g), (l, h))| {
                    if m.sigma > 0.0 {
                        (xi - g / m.sigma).clamp(*l, *h)
                    } else if *g > 0.0 {
                        *l
                    } else if *g < 0.0 {
                        *h
                    } else {
                        *xi
                    }
                })
                .collect();
            Ok(BlockTrial::uncertified(p))
        }
    }

    #[test]
    fn one_block_exact_minimizer_accepted_at_zero_sigma() {
        let p = BoxQuadratic {
            targets: vec![vec![0.0]],
            lo: vec![vec![-1.0]],
            hi: vec![vec![1.0]],
        };
        let mut s = BcdState::new(&p, vec![vec![1.0]]).unwrap();
        let r = bcd_iterate(&mut s, &BcdConfig::default(), &p).unwrap();
        assert_eq!(s.x, vec![vec![0.0]]);
        assert_eq!(r.sigma_k, 0.0);
        assert_eq!(r.alternative, Alternative::Exact);
        assert_eq!(r.f_value, 0.0);
        assert_eq!(r.f_evals, 1);
    }

    #[test]
    fn one_cycle_projects_every_block() {
        let p = BoxQuadratic {
            targets: vec![vec![2.0, 0.5], vec![-3.0, 0.0], vec![0.2, 0.3]],
            lo: vec![vec![0.0, 0.0], vec![-1.0, -1.0], vec![0.0, 0.0]],
            hi: vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]],
        };
        let x0 = vec![vec![0.0, 0.0]; 3];
        let cfg = BcdConfig {
            max_cycles: 1,
            ..Default::default()
        };
        let out = run_bcd(&p, x0, &cfg).unwrap();
        for i in 0..3 {
            assert_eq!(out.x[i], p.project(i));
        }
        assert_eq!(out.trace.len(), 3);
        assert_eq!(out.stop, StopReason::MaxCycles);
        assert_eq!(out.cycle_values.len(), 1);
    }

    #[test]
    fn model_mode_escalates_sigma_within_bounds() {
        // gamma = 2 for every block of sum |x_i - c_i|^2
        let p = BoxQuadratic {
            targets: vec![vec![0.3, -0.2], vec![0.9, 0.1]],
            lo: vec![vec![-1.0, -1.0]; 2],
            hi: vec![vec![1.0, 1.0]; 2],
        };
        let cfg = BcdConfig {
            mode: OracleMode::Alt1Only,
            sigma_min: 0.01,
            max_cycles: 50,
            stop_tol: 1e-14,
            ..Default::default()
        };
        let out = run_bcd(&p, vec![vec![-1.0, 1.0], vec![1.0, -1.0]], &cfg).unwrap();
        let bound = lemma1_bound(2.0, 0.0, cfg.alpha, cfg.sigma_min);
        let smax = sigma_max_bound(2.0, 0.0, cfg.alpha);
        assert!(out.trace.iter().any(|r| r.n_sigma_increases > 0));
        for r in &out.trace {
            assert!((r.n_sigma_increases as f64) <= bound);
            assert!(r.sigma_k < smax);
        }
        assert!(descent_violations(out.f_initial, &out.trace, cfg.alpha).is_empty());
        assert!(evaluation_violations(&out.trace).is_empty());
        assert!(out.f_final < 1e-10);
    }

    #[test]
    fn fixed_point_stops_after_one_pass() {
        let p = BoxQuadratic {
            targets: vec![vec![0.5], vec![0.5]],
            lo: vec![vec![0.0]; 2],
            hi: vec![vec![1.0]; 2],
        };
        let out = run_bcd(&p, vec![vec![0.5], vec![0.5]], &BcdConfig::default()).unwrap();
        assert_eq!(out.trace.len(), 2);
        assert_eq!(out.stop, StopReason::Repetition);
        assert!(out.trace.iter().all(|r| r.step_norm == 0.0));
    }

    #[test]
    fn zero_cycles_returns_start() {
        let p = BoxQuadratic {
            targets: vec![vec![0.5]],
            lo: vec![vec![0.0]],
            hi: vec![vec![1.0]],
        };
        let cfg = BcdConfig {
            max_cycles: 0,
            ..Default::default()
        };
        let out = run_bcd(&p, vec![vec![0.0]], &cfg).unwrap();
        assert_eq!(out.x, vec![vec![0.0]]);
        assert!(out.trace.is_empty());
    }

    /// Oracle that always proposes the same ascent point.
    struct Stubborn;

    impl BlockProblem for Stubborn {
        fn n_blocks(&self) -> usize {
            1
        }
        fn block_dim(&self, _: usize) -> usize {
            1
        }
        fn value(&self, x: &[Vec<f64>]) -> f64 {
            x[0][0]
        }
        fn block_gradient(&self, _: &[Vec<f64>], _: usize) -> Result<Vec<f64>, BcdError> {
            Ok(vec![1.0])
        }
        fn model_block_minimizer(
            &self,
            x: &[Vec<f64>],
            _: usize,
            _: &QuadraticModel,
            _: f64,
        ) -> Result<BlockTrial, BcdError> {
            Ok(BlockTrial::uncertified(vec![x[0][0] + 1.0]))
        }
    }

    /// Objective whose rounding hides a tiny decrease: any move costs one
    /// unit in the last place of `1e8`.
    struct Rounded;

    impl BlockProblem for Rounded {
        fn n_blocks(&self) -> usize {
            1
        }
        fn block_dim(&self, _: usize) -> usize {
            1
        }
        fn value(&self, x: &[Vec<f64>]) -> f64 {
            if x[0][0] == 0.0 {
                1e8
            } else {
                1e8 + 2e-8
            }
        }
        fn block_gradient(&self, _: &[Vec<f64>], _: usize) -> Result<Vec<f64>, BcdError> {
            Ok(vec![1.0])
        }
        fn model_block_minimizer(
            &self,
            x: &[Vec<f64>],
            _: usize,
            model: &QuadraticModel,
            _: f64,
        ) -> Result<BlockTrial, BcdError> {
            let step = if model.sigma > 0.0 {
                1e-12 / model.sigma
            } else {
                1e-12
            };
            Ok(BlockTrial::uncertified(vec![x[0][0] - step]))
        }
    }

    #[test]
    fn decrease_below_rounding_is_a_null_step() {
        let out = run_bcd(&Rounded, vec![vec![0.0]], &BcdConfig::default()).unwrap();
        assert_eq!(out.stop, StopReason::Repetition);
        assert_eq!(out.x, vec![vec![0.0]]);
        let r = &out.trace[0];
        assert_eq!(r.alternative, Alternative::Null);
        assert_eq!((r.step_norm, r.sigma_k, r.f_value), (0.0, 0.0, 1e8));
    }

    #[test]
    fn runaway_sigma_is_reported() {
        let err = run_bcd(&Stubborn, vec![vec![0.0]], &BcdConfig::default()).unwrap_err();
        assert!(matches!(err, BcdError::RunawaySigma { block: 0, .. }));
    }

    #[test]
    fn config_validation() {
        let cfg = BcdConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(BcdError::InvalidConfig(_))));
        let p = BoxQuadratic {
            targets: vec![vec![0.5]],
            lo: vec![vec![0.0]],
            hi: vec![vec![1.0]],
        };
        assert!(matches!(
            run_bcd(&p, vec![vec![0.0, 1.0]], &BcdConfig::default()),
            Err(BcdError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn criticality_of_unconstrained_blocks() {
        let p = BoxQuadratic {
            targets: vec![vec![0.5, 0.5], vec![0.1, 0.2]],
            lo: vec![vec![0.0; 2]; 2],
            hi: vec![vec![1.0; 2]; 2],
        };
        let x = p.targets.clone();
        let rep = criticality_report(&p, &x, &[None, None]);
        for r in rep {
            assert_eq!(r.residual, Some(0.0));
            assert_eq!(r.worst_complementarity, 0.0);
        }
    }

    fn l_shape_problem(target: [f64; 2]) -> CoveredProblem {
        CoveredProblem::new(
            vec![l_shape_kink_cover()],
            move |x| (x[0][0] - target[0]).powi(2) + (x[0][1] - target[1]).powi(2),
            move |x, _| vec![2.0 * (x[0][0] - target[0]), 2.0 * (x[0][1] - target[1])],
        )
    }

    #[test]
    fn covered_problem_reaches_projection_onto_l_shape() {
        // nearest point of the L to (0.6, 0.4) is (0.6, 0), while (0, 0.4) is
        // a local minimizer on the other arm; sigma_min above the Lipschitz
        // constant 2 keeps the steps local
        let p = l_shape_problem([0.6, 0.4]);
        let cfg = BcdConfig {
            mode: OracleMode::Alt1Only,
            sigma_min: 4.0,
            max_cycles: 200,
            stop_tol: 1e-12,
            ..Default::default()
        };
        let kkt_points = [[0.6, 0.0], [0.0, 0.4]];
        for start in [[0.9, -0.6], [-0.8, 0.8], [-0.9, 0.3]] {
            let out = run_bcd(&p, vec![start.to_vec()], &cfg).unwrap();
            let x = &out.x[0];
            assert!(l_shape_contains(x));
            assert!(
                kkt_points
                    .iter()
                    .any(|e| (x[0] - e[0]).abs() < 1e-4 && (x[1] - e[1]).abs() < 1e-4),
                "{x:?}"
            );
            assert_eq!(out.stop, StopReason::Repetition);
            assert!(descent_violations(out.f_initial, &out.trace, cfg.alpha).is_empty());
            assert!(out.trace.iter().all(|r| r.alt1_passed == Some(true)));
            let rep = criticality_report(&p, &out.x, &out.certificates);
            assert!(rep[0].residual.unwrap() < 1e-3);
            assert!(rep[0].worst_complementarity <= cfg.delta);
        }
    }

    #[test]
    fn certify_point_uses_first_covering_set() {
        let cover = OpenCover::new(vec![CoveringSet::new(
            Region::open_box(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
            vec![SmoothInequality::linear("x1<=1", vec![1.0, 0.0], 1.0)],
        )
        .unwrap()]);
        let c = certify_point(&cover, &[1.0, 0.0], &[-2.0, 0.0], 1e-6).unwrap();
        assert!((c.record.mu[0] - 2.0).abs() < 1e-12);
        assert!(certify_point(&cover, &[1.5, 0.0], &[-2.0, 0.0], 1e-6).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let r = IterationRecord {
            k: 0,
            i_k: 2,
            sigma_k: 0.5,
            n_sigma_increases: 1,
            f_value: 0.1,
            step_norm: 1.0 / 3.0,
            alternative: Alternative::Model,
            f_evals: 2,
            alt1_passed: None,
        };
        let csv = trace_csv(&[r]);
        let line = csv.lines().nth(1).unwrap();
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "3");
        assert_eq!(cols[4].parse::<f64>().unwrap(), 0.1);
        assert_eq!(cols[5].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(cols[6], "1");
    }
}
