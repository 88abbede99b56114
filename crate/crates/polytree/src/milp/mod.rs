//! Linear and mixed-integer linear programming: model construction,
//! a bounded-variable simplex core, and deterministic branch-and-bound.

mod branch_bound;
pub mod lp_text;
mod model;
mod simplex;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use thiserror::Error;

pub use model::{ConstrId, LinExpr, MatrixVar, MilpModel, Sense, VarId, VarKind};
pub(crate) use simplex::{LpStatus, Simplex, StdForm};

/// Counts every LP/MILP solve in the process. Test hook used to substantiate
/// that the in-tree policy path never touches the optimizer.
pub static SOLVE_COUNT: AtomicU64 = AtomicU64::new(0);

pub fn solver_invocations() -> u64 {
    SOLVE_COUNT.load(Ordering::Relaxed)
}

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("model is frozen after solve")]
    ModelFrozen,
    #[error("constraint references an undeclared variable handle")]
    UndeclaredVariable,
    #[error("coefficient or right-hand side is not finite")]
    NonFiniteCoefficient,
    #[error("invalid variable bounds")]
    InvalidBounds,
    #[error("model has binary variables; relax or fix them before solve_lp")]
    BinariesPresent,
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("time limit reached with no incumbent")]
    TimeLimit,
    #[error("node limit reached with no incumbent")]
    NodeLimit,
    #[error("numerical failure after bounded re-factorization attempts")]
    NumericalFailure,
    #[error("unsupported export format")]
    UnsupportedFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolStatus {
    Optimal,
    /// Incumbent found but search stopped early (time limit).
    Feasible,
    GapLimit,
    NodeLimit,
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub nodes: u64,
    pub lp_iterations: u64,
    pub wall_time: Duration,
    /// Best bound at each node selection, in selection order.
    pub bound_history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: SolStatus,
    values: Vec<f64>,
    pub objective: f64,
    /// `(incumbent - best bound) / max(1, |incumbent|)`.
    pub gap: f64,
    pub stats: SolveStats,
    /// Infeasibility multipliers when an LP subproblem certified infeasibility
    /// (populated on the error path via [`LpCertificate`]).
    pub max_violation: f64,
}

impl MilpSolution {
    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.index()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Certificate attached to infeasible/unbounded LP outcomes.
#[derive(Clone, Debug)]
pub enum LpCertificate {
    /// Row multipliers separating the constraint system from its bounds.
    Farkas(Vec<f64>),
    /// Improving direction over the structural variables.
    Ray(Vec<f64>),
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("LP infeasible")]
    Infeasible(LpCertificate),
    #[error("LP unbounded")]
    Unbounded(LpCertificate),
    #[error("numerical failure")]
    NumericalFailure,
}

/// Branch-and-bound configuration.
#[derive(Clone, Debug)]
pub struct MilpConfig {
    /// Terminate when `(incumbent - bound) <= gap_tol * max(1, |incumbent|)`.
    pub gap_tol: f64,
    pub node_limit: u64,
    /// Wall-clock limit. `None` keeps solves fully deterministic.
    pub time_limit: Option<Duration>,
    /// Clamp for derived big-M constants (exposed as `milp.big_m_max`).
    pub big_m_max: f64,
}

impl Default for MilpConfig {
    fn default() -> Self {
        MilpConfig {
            gap_tol: 1e-6,
            node_limit: 1_000_000,
            time_limit: None,
            big_m_max: 1e5,
        }
    }
}

/// Solves the continuous relaxation of `model` (binaries relaxed to their
/// current bounds, typically `[0,1]`, or wherever they have been fixed).
pub fn solve_lp(model: &mut MilpModel) -> Result<MilpSolution, LpError> {
    SOLVE_COUNT.fetch_add(1, Ordering::Relaxed);
    model.mark_frozen();
    let start = std::time::Instant::now();
    let f = StdForm::from_model(model);
    let mut s = Simplex::new(&f);
    let res = s.solve_from_scratch().map_err(|_| LpError::NumericalFailure)?;
    match res.status {
        LpStatus::Optimal => {
            let values: Vec<f64> = (0..f.n_struct).map(|j| s.value(j)).collect();
            let max_violation = model.max_violation(&values);
            if max_violation > 1e-7 {
                return Err(LpError::NumericalFailure);
            }
            Ok(MilpSolution {
                status: SolStatus::Optimal,
                values,
                objective: res.obj,
                gap: 0.0,
                stats: SolveStats {
                    nodes: 0,
                    lp_iterations: res.iterations as u64,
                    wall_time: start.elapsed(),
                    bound_history: Vec::new(),
                },
                max_violation,
            })
        }
        LpStatus::Infeasible(y) => Err(LpError::Infeasible(LpCertificate::Farkas(y))),
        LpStatus::Unbounded(ray) => Err(LpError::Unbounded(LpCertificate::Ray(
            ray[..f.n_struct].to_vec(),
        ))),
    }
}

/// Branch-and-bound solve. See [`branch_bound`] for the search rules.
pub fn solve_milp(model: &mut MilpModel, config: &MilpConfig) -> Result<MilpSolution, MilpError> {
    SOLVE_COUNT.fetch_add(1, Ordering::Relaxed);
    model.mark_frozen();
    branch_bound::solve(model, config)
}
