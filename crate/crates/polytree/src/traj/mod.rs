//! Polytopic trajectories: fixed-horizon mixed-integer programs whose
//! solutions are sequences of polytopes with per-step affine feedback,
//! certified to flow into a target set.
//!
//! One model fuses the open-loop trajectory and its funnel: per step it
//! carries the set parameters `(xbar, G)`, the feedback parameters
//! `(ubar, theta)`, mode binaries with big-M gated set dynamics
//! `xbar' = A xbar + B ubar + c`, `G' = A G + B theta`, a containment of the
//! stacked state-control polytope in the active mode's cell, and a terminal
//! containment of the last set in one of the targets.

mod check;
mod encode;

pub use check::{check_soundness, SoundnessReport};
pub use encode::{build_model, TrajModel};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

use crate::geometry::{GeometryError, HPolytope, TemplatePolytope};
use crate::milp::{self, MilpConfig, MilpError};
use crate::pwa::PwaSystem;

pub const EVOLUTION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("no polytopic trajectory exists for this query")]
    Infeasible,
    #[error("solution rejected: initial-set volume {0:.3e} below threshold")]
    VolumeRejected(f64),
    #[error("solver budget exhausted: {0}")]
    Budget(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("empty target list")]
    EmptyTargets,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<GeometryError> for TrajError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::DimensionMismatch(s) => TrajError::DimensionMismatch(s),
            other => TrajError::Numerical(other.to_string()),
        }
    }
}

impl From<MilpError> for TrajError {
    fn from(e: MilpError) -> Self {
        match e {
            MilpError::Infeasible => TrajError::Infeasible,
            MilpError::NodeLimit => TrajError::Budget("node limit".into()),
            MilpError::TimeLimit => TrajError::Budget("time limit".into()),
            other => TrajError::Numerical(other.to_string()),
        }
    }
}

/// Where the initial set center is allowed to sit.
#[derive(Clone, Debug)]
pub enum Anchor {
    Free,
    /// `xbar_0` within `x ± eta`, componentwise.
    NearPoint { x: DVector<f64>, eta: DVector<f64> },
}

/// Objective weights for the linear volume heuristics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VolumeWeights {
    /// Weight on the trace of the initial-set map.
    pub trace: f64,
    /// Weight on the sum of initial-set diagonals (equal to the trace here,
    /// since diagonals are constrained nonnegative).
    pub l1: f64,
    /// Weight on the smallest initial-set diagonal (one epigraph variable).
    pub linf: f64,
    /// Total weight spread over the traces of the later-step maps.
    pub step_trace: f64,
}

impl Default for VolumeWeights {
    fn default() -> Self {
        VolumeWeights { trace: 1.0, l1: 0.1, linf: 1.0, step_trace: 0.05 }
    }
}

#[derive(Clone, Debug)]
pub struct VolumeObjective {
    pub weights: VolumeWeights,
    /// Lower bound on the constrained diagonals of the initial-set map.
    pub d_min: f64,
    /// `None`: full-rank lower-triangular initial map. `Some(q)`: the map is
    /// reparameterized as a free square factor times a fixed rank-`q`
    /// axis-aligned selector.
    pub rank: Option<usize>,
}

impl Default for VolumeObjective {
    fn default() -> Self {
        VolumeObjective { weights: VolumeWeights::default(), d_min: 1e-3, rank: None }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryQuery<'a> {
    pub system: &'a PwaSystem,
    pub horizon: usize,
    pub anchor: Anchor,
    pub targets: Vec<HPolytope>,
    pub template: Arc<TemplatePolytope>,
    pub objective: VolumeObjective,
    pub milp: MilpConfig,
}

impl<'a> TrajectoryQuery<'a> {
    pub fn new(system: &'a PwaSystem, horizon: usize, anchor: Anchor, targets: Vec<HPolytope>) -> Self {
        TrajectoryQuery {
            system,
            horizon,
            anchor,
            targets,
            template: Arc::new(TemplatePolytope::unit_cube(system.n)),
            objective: VolumeObjective::default(),
            milp: MilpConfig::default(),
        }
    }
}

/// A solved polytopic trajectory: per step the set `{xbar} + G P`, the
/// feedback `u(p) = ubar + theta p`, and the active mode; the final set is
/// contained in `targets[landing]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolytopicTrajectory {
    #[serde(with = "vec_dvector")]
    pub xbar: Vec<DVector<f64>>,
    #[serde(with = "vec_dmatrix")]
    pub g: Vec<DMatrix<f64>>,
    #[serde(with = "vec_dvector")]
    pub ubar: Vec<DVector<f64>>,
    #[serde(with = "vec_dmatrix")]
    pub theta: Vec<DMatrix<f64>>,
    pub modes: Vec<usize>,
    pub landing: usize,
    pub objective: f64,
    /// Cell-containment multipliers for the active mode, one per step.
    #[serde(with = "vec_dmatrix")]
    pub multipliers: Vec<DMatrix<f64>>,
}

impl PolytopicTrajectory {
    pub fn horizon(&self) -> usize {
        self.modes.len()
    }

    /// Worst evolution residual over center and map recursions.
    pub fn evolution_residual(&self, system: &PwaSystem) -> f64 {
        let mut worst: f64 = 0.0;
        for tau in 0..self.horizon() {
            let md = &system.modes[self.modes[tau]];
            let cx = &md.a * &self.xbar[tau] + &md.b * &self.ubar[tau] + &md.c;
            worst = worst.max((&self.xbar[tau + 1] - cx).amax());
            let cg = &md.a * &self.g[tau] + &md.b * &self.theta[tau];
            worst = worst.max((&self.g[tau + 1] - cg).amax());
        }
        worst
    }

    /// Product of the map diagonals at step zero (the volume surrogate).
    pub fn initial_volume(&self) -> f64 {
        let g0 = &self.g[0];
        let k = g0.nrows().min(g0.ncols());
        (0..k).map(|i| g0[(i, i)].abs()).product()
    }
}

/// Solves the query. On a tiny initial volume the optimization is retried
/// once with a boosted smallest-diagonal weight before rejecting.
pub fn solve_trajectory(query: &TrajectoryQuery) -> Result<PolytopicTrajectory, TrajError> {
    match solve_once(query) {
        Err(TrajError::VolumeRejected(v)) => {
            let mut boosted = query.clone();
            boosted.objective.weights.linf *= 10.0;
            match solve_once(&boosted) {
                Err(TrajError::VolumeRejected(_)) => Err(TrajError::VolumeRejected(v)),
                other => other,
            }
        }
        other => other,
    }
}

/// Minimum accepted initial-set volume surrogate.
pub const MIN_VOLUME: f64 = 1e-6;

fn solve_once(query: &TrajectoryQuery) -> Result<PolytopicTrajectory, TrajError> {
    let mut tm = build_model(query)?;
    let sol = milp::solve_milp(&mut tm.model, &query.milp)?;
    let traj = tm.extract(query, &sol)?;
    let resid = traj.evolution_residual(query.system);
    if resid > EVOLUTION_TOL {
        return Err(TrajError::Numerical(format!("evolution residual {resid:.3e}")));
    }
    let vol = rank_aware_volume(query, &traj);
    if vol < MIN_VOLUME && query.objective.d_min > 0.0 {
        return Err(TrajError::VolumeRejected(vol));
    }
    Ok(traj)
}

fn rank_aware_volume(query: &TrajectoryQuery, traj: &PolytopicTrajectory) -> f64 {
    match query.objective.rank {
        None => traj.initial_volume(),
        Some(q) => {
            let g0 = &traj.g[0];
            (0..q.min(g0.nrows())).map(|i| g0[(i, i)].abs()).product()
        }
    }
}

/// Retry a failed full-rank query with a reduced-rank initial map,
/// line-searching the rank from `n - 1` downward.
pub fn rank_fallback(query: &TrajectoryQuery, max_rank: usize) -> Result<PolytopicTrajectory, TrajError> {
    let n = query.system.n;
    if max_rank == 0 || max_rank >= n {
        return Err(TrajError::InvalidQuery(format!(
            "fallback rank must be in 1..{n}, got {max_rank}"
        )));
    }
    let mut last = TrajError::Infeasible;
    for q in (1..=max_rank).rev() {
        let mut reduced = query.clone();
        reduced.objective.rank = Some(q);
        match solve_trajectory(&reduced) {
            Ok(t) => return Ok(t),
            Err(e) => last = e,
        }
    }
    Err(last)
}

mod vec_dvector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<Vec<f64>> = v.iter().map(|x| x.iter().copied().collect()).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        let raw: Vec<Vec<f64>> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(DVector::from_vec).collect())
    }
}

mod vec_dmatrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<Vec<Vec<f64>>> = v
            .iter()
            .map(|m| (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect())
            .collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let raw: Vec<Vec<Vec<f64>>> = Vec::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|rows| {
                let nr = rows.len();
                let nc = rows.first().map_or(0, |r| r.len());
                DMatrix::from_row_iterator(nr, nc, rows.into_iter().flatten())
            })
            .collect())
    }
}
