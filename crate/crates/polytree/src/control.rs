//! Online policies over a grown tree, closed-loop simulation, and the
//! point mixed-integer MPC used as a feasibility/optimality oracle.
//!
//! Inside the tree the policy is matrix arithmetic only: find the containing
//! nodes, pick the smallest cost-to-go, apply its affine law. Outside the
//! tree a small LP per candidate mode steers the successor state toward the
//! nearest node's child set.

use nalgebra::DVector;
use thiserror::Error;

use crate::geometry::{batch_distance, EPSILON, MEMBERSHIP_TOL};
use crate::milp::{self, LinExpr, MilpConfig, MilpError, MilpModel};
use crate::pwa::{PwaError, PwaSystem};
use crate::tree::{NodeId, PolytopicTree};

pub const GOAL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("state is not inside any tree node")]
    NotInTree,
    #[error("no mode's cell admits the given state")]
    NoFeasibleMode,
    #[error("point MPC infeasible at this horizon")]
    Infeasible,
    #[error(transparent)]
    Pwa(#[from] PwaError),
    #[error("solver failure: {0}")]
    Solver(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchTag {
    InTree(NodeId),
    OutOfTree,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    GoalReached(usize),
    MaxSteps,
    PartitionExit,
}

/// One closed-loop run.
#[derive(Clone, Debug)]
pub struct ClosedLoopTrace {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub branch: Vec<BranchTag>,
    pub outcome: Outcome,
    /// Accumulated stage cost.
    pub cost: f64,
}

/// In-tree policy: among nodes containing `x`, apply the law of the one with
/// least cost-to-go. Pure matrix arithmetic; no optimization runs here.
pub fn policy_in_tree(
    tree: &PolytopicTree,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, NodeId, f64), ControlError> {
    let mut best: Option<(f64, NodeId)> = None;
    for node in tree.nodes() {
        if node.is_root() {
            continue;
        }
        let d = crate::geometry::distance_to_node(x, &node.polytope, EPSILON);
        if d <= MEMBERSHIP_TOL {
            match best {
                Some((v, id)) if (v, id) <= (node.value, node.id) => {}
                _ => best = Some((node.value, node.id)),
            }
        }
    }
    let (value, id) = best.ok_or(ControlError::NotInTree)?;
    let node = tree.node(id);
    let fb = node.feedback.as_ref().expect("non-root node has feedback");
    let reg = node
        .polytope
        .regularized(EPSILON)
        .expect("tree nodes have square maps");
    let p = reg.g_inv * (x - node.polytope.center());
    let u = &fb.ubar + &fb.theta * p;
    Ok((u, id, value))
}

/// Out-of-tree policy: find the nearest node, then per candidate mode solve
/// `min ||delta||` with `(x,u)` in the cell and `A x + B u + c + delta` in
/// the (regularized) child set; return the best across modes.
pub fn policy_out_tree(
    tree: &PolytopicTree,
    x: &DVector<f64>,
    norm: crate::geometry::Norm,
) -> Result<(DVector<f64>, f64), ControlError> {
    let system = &tree.system;
    let dists = batch_distance(x, tree.nodes().iter().map(|n| &n.polytope), EPSILON);
    let nearest = (0..tree.len())
        .min_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)))
        .ok_or(ControlError::NotInTree)?;
    // Steer toward the child of the nearest node; the root steers to itself.
    let target_id = tree.node(nearest).child.unwrap_or(0);
    let target = tree
        .target_hform(target_id)
        .map_err(|e| ControlError::Solver(e.to_string()))?;

    let n = system.n;
    let m = system.m;
    let inf = f64::INFINITY;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for md in &system.modes {
        let mut model = MilpModel::new();
        let u = match model.add_matrix(m, 1, -inf, inf) {
            Ok(v) => v,
            Err(e) => return Err(ControlError::Solver(e.to_string())),
        };
        let build = (|| -> Result<(), MilpError> {
            // Cell rows with x fixed: H_x x + H_u u <= h.
            for r in 0..md.cell.num_rows() {
                let mut e = LinExpr::new();
                let mut cval = 0.0;
                for k in 0..n {
                    cval += md.cell.matrix()[(r, k)] * x[k];
                }
                for l in 0..m {
                    e.add_term(u.at(l, 0), md.cell.matrix()[(r, n + l)]);
                }
                model.add_le(e, md.cell.rhs()[r] - cval)?;
            }
            // delta = target point - (A x + B u + c); encode via target rows
            // on A x + B u + c + delta and an epigraph on delta.
            let delta = model.add_matrix(n, 1, -inf, inf)?;
            let drive = &md.a * x + &md.c;
            // Successor + delta lands in the target polytope.
            for r in 0..target.num_rows() {
                let mut e = LinExpr::new();
                let mut cval = 0.0;
                for k in 0..n {
                    cval += target.matrix()[(r, k)] * drive[k];
                    e.add_term(delta.at(k, 0), target.matrix()[(r, k)]);
                    for l in 0..m {
                        e.add_term(u.at(l, 0), target.matrix()[(r, k)] * md.b[(k, l)]);
                    }
                }
                model.add_le(e, target.rhs()[r] - cval)?;
            }
            let mut obj = LinExpr::new();
            let tvars: Vec<crate::milp::VarId> = match norm {
                crate::geometry::Norm::Linf => {
                    let t = model.add_variable(0.0, inf)?;
                    obj.add_term(t, 1.0);
                    vec![t; n]
                }
                crate::geometry::Norm::L1 => {
                    let tm = model.add_matrix(n, 1, 0.0, inf)?;
                    let ts: Vec<_> = (0..n).map(|k| tm.at(k, 0)).collect();
                    for t in &ts {
                        obj.add_term(*t, 1.0);
                    }
                    ts
                }
            };
            for k in 0..n {
                let mut up = LinExpr::new();
                up.add_term(delta.at(k, 0), 1.0).add_term(tvars[k], -1.0);
                model.add_le(up, 0.0)?;
                let mut dn = LinExpr::new();
                dn.add_term(delta.at(k, 0), -1.0).add_term(tvars[k], -1.0);
                model.add_le(dn, 0.0)?;
            }
            model.set_objective(obj)?;
            Ok(())
        })();
        if build.is_err() {
            continue;
        }
        match milp::solve_lp(&mut model) {
            Ok(sol) => {
                let uval = DVector::from_fn(m, |l, _| sol.value(u.at(l, 0)));
                let residual = sol.objective;
                match &best {
                    Some((b, _)) if *b <= residual => {}
                    _ => best = Some((residual, uval)),
                }
            }
            Err(milp::LpError::Infeasible(_)) => continue,
            Err(e) => return Err(ControlError::Solver(e.to_string())),
        }
    }
    match best {
        Some((residual, u)) => Ok((u, residual)),
        None => Err(ControlError::NoFeasibleMode),
    }
}

/// Closed-loop rollout: stop in the goal, use the in-tree law when the state
/// is covered, fall back to the steering LP otherwise.
pub fn simulate(
    tree: &PolytopicTree,
    x0: &DVector<f64>,
    max_steps: usize,
) -> Result<ClosedLoopTrace, ControlError> {
    let system = &tree.system;
    let mut states = vec![x0.clone()];
    let mut inputs = Vec::new();
    let mut branch = Vec::new();
    let mut cost = 0.0;
    let mut x = x0.clone();
    for step in 0..max_steps {
        if system.goal.contains(&x, GOAL_TOL) {
            return Ok(ClosedLoopTrace { states, inputs, branch, outcome: Outcome::GoalReached(step), cost });
        }
        let (u, tag) = match policy_in_tree(tree, &x) {
            Ok((u, id, _)) => (u, BranchTag::InTree(id)),
            Err(ControlError::NotInTree) => {
                let (u, _) = policy_out_tree(tree, &x, crate::geometry::Norm::Linf)?;
                (u, BranchTag::OutOfTree)
            }
            Err(e) => return Err(e),
        };
        let mode = match system.mode_of(&x, &u) {
            Ok(i) => i,
            Err(PwaError::OutOfPartition) => {
                return Ok(ClosedLoopTrace {
                    states,
                    inputs,
                    branch,
                    outcome: Outcome::PartitionExit,
                    cost,
                })
            }
            Err(e) => return Err(e.into()),
        };
        cost += system.stage_cost_eval(mode, &x, &u);
        let next = system.step_in_mode(mode, &x, &u);
        inputs.push(u);
        branch.push(tag);
        states.push(next.clone());
        x = next;
    }
    if system.goal.contains(&x, GOAL_TOL) {
        let k = states.len() - 1;
        return Ok(ClosedLoopTrace { states, inputs, branch, outcome: Outcome::GoalReached(k), cost });
    }
    Ok(ClosedLoopTrace { states, inputs, branch, outcome: Outcome::MaxSteps, cost })
}

/// Solution of the fixed-horizon point MPC.
#[derive(Clone, Debug)]
pub struct PointMpc {
    pub inputs: Vec<DVector<f64>>,
    pub modes: Vec<usize>,
    pub objective: f64,
}

/// Fixed-horizon mixed-integer MPC from a single state: decision variables
/// are a state/input trajectory with per-step mode binaries; the final state
/// must reach the goal. Used as the open-loop feasibility oracle.
pub fn point_mpc(
    system: &PwaSystem,
    x0: &DVector<f64>,
    horizon: usize,
    config: &MilpConfig,
) -> Result<PointMpc, ControlError> {
    if horizon == 0 {
        return Err(ControlError::Solver("horizon must be at least 1".into()));
    }
    let n = system.n;
    let m = system.m;
    let n_modes = system.modes.len();
    let (lo_x, hi_x) = system
        .state_box
        .bounding_box()
        .map_err(|e| ControlError::Solver(e.to_string()))?;
    let (lo_u, hi_u) = system
        .input_box
        .bounding_box()
        .map_err(|e| ControlError::Solver(e.to_string()))?;
    let s_x: Vec<f64> = (0..n).map(|k| lo_x[k].abs().max(hi_x[k].abs())).collect();
    let s_u: Vec<f64> = (0..m).map(|l| lo_u[l].abs().max(hi_u[l].abs())).collect();

    let mut model = MilpModel::new();
    let build = (|| -> Result<_, MilpError> {
        let mut xs = Vec::with_capacity(horizon + 1);
        for tau in 0..=horizon {
            let v = model.add_matrix(n, 1, 0.0, 0.0)?;
            for k in 0..n {
                if tau == 0 {
                    model.set_bounds(v.at(k, 0), x0[k], x0[k])?;
                } else {
                    model.set_bounds(v.at(k, 0), lo_x[k], hi_x[k])?;
                }
            }
            xs.push(v);
        }
        let mut us = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let v = model.add_matrix(m, 1, 0.0, 0.0)?;
            for l in 0..m {
                model.set_bounds(v.at(l, 0), lo_u[l], hi_u[l])?;
            }
            us.push(v);
        }
        let mut deltas = Vec::with_capacity(horizon);
        let mut objective = LinExpr::new();
        for tau in 0..horizon {
            let ds: Result<Vec<_>, _> = (0..n_modes).map(|_| model.add_binary()).collect();
            let ds = ds?;
            let mut sum = LinExpr::new();
            for d in &ds {
                sum.add_term(*d, 1.0);
            }
            model.add_eq(sum, 1.0)?;
            model.mark_sos1(ds.clone())?;
            for (i, md) in system.modes.iter().enumerate() {
                // Dynamics rows gated by the mode binary.
                for k in 0..n {
                    let mut reach = s_x[k] + md.c[k].abs();
                    for j in 0..n {
                        reach += md.a[(k, j)].abs() * s_x[j];
                    }
                    for l in 0..m {
                        reach += md.b[(k, l)].abs() * s_u[l];
                    }
                    let big_m = if reach.is_finite() { reach.clamp(10.0, config.big_m_max) } else { 1e4 };
                    let mut expr = LinExpr::new();
                    expr.add_term(xs[tau + 1].at(k, 0), 1.0);
                    for j in 0..n {
                        expr.add_term(xs[tau].at(j, 0), -md.a[(k, j)]);
                    }
                    for l in 0..m {
                        expr.add_term(us[tau].at(l, 0), -md.b[(k, l)]);
                    }
                    let mut up = LinExpr::new();
                    up.add_expr(&expr, 1.0).add_term(ds[i], big_m);
                    model.add_big_m_constraint(up, crate::milp::Sense::Le, md.c[k] + big_m, big_m)?;
                    let mut dn = LinExpr::new();
                    dn.add_expr(&expr, -1.0).add_term(ds[i], big_m);
                    model.add_big_m_constraint(dn, crate::milp::Sense::Le, -md.c[k] + big_m, big_m)?;
                }
                // Cell membership rows gated the same way.
                for r in 0..md.cell.num_rows() {
                    let mut reach = md.cell.rhs()[r].abs();
                    for k in 0..n {
                        reach += md.cell.matrix()[(r, k)].abs() * s_x[k];
                    }
                    for l in 0..m {
                        reach += md.cell.matrix()[(r, n + l)].abs() * s_u[l];
                    }
                    let big_m = if reach.is_finite() { reach.clamp(10.0, config.big_m_max) } else { 1e4 };
                    let mut e = LinExpr::new();
                    for k in 0..n {
                        e.add_term(xs[tau].at(k, 0), md.cell.matrix()[(r, k)]);
                    }
                    for l in 0..m {
                        e.add_term(us[tau].at(l, 0), md.cell.matrix()[(r, n + l)]);
                    }
                    e.add_term(ds[i], big_m);
                    model.add_big_m_constraint(
                        e,
                        crate::milp::Sense::Le,
                        md.cell.rhs()[r] + big_m,
                        big_m,
                    )?;
                }
                // Stage cost. Constant costs weight the binaries directly;
                // affine costs get a per-step epigraph gated by the binary.
                match &md.cost {
                    crate::pwa::StageCost::Constant { w } => {
                        objective.add_term(ds[i], *w);
                    }
                    crate::pwa::StageCost::Affine { a_x, a_u, b } => {
                        let t = model.add_variable(-1e6, 1e6)?;
                        let mut reach = b.abs();
                        for (k, a) in a_x.iter().enumerate() {
                            reach += a.abs() * s_x[k];
                        }
                        for (l, a) in a_u.iter().enumerate() {
                            reach += a.abs() * s_u[l];
                        }
                        let big_m = if reach.is_finite() { reach.clamp(10.0, config.big_m_max) } else { 1e4 };
                        let mut e = LinExpr::new();
                        for (k, a) in a_x.iter().enumerate() {
                            e.add_term(xs[tau].at(k, 0), *a);
                        }
                        for (l, a) in a_u.iter().enumerate() {
                            e.add_term(us[tau].at(l, 0), *a);
                        }
                        e.add_term(t, -1.0);
                        e.add_term(ds[i], big_m);
                        model.add_big_m_constraint(e, crate::milp::Sense::Le, big_m - b, big_m)?;
                        objective.add_term(t, 1.0);
                    }
                }
            }
            deltas.push(ds);
        }
        // Terminal goal membership.
        for r in 0..system.goal.num_rows() {
            let mut e = LinExpr::new();
            for k in 0..n {
                e.add_term(xs[horizon].at(k, 0), system.goal.matrix()[(r, k)]);
            }
            model.add_le(e, system.goal.rhs()[r])?;
        }
        model.set_objective(objective)?;
        Ok((xs, us, deltas))
    })();
    let (_, us, deltas) = build.map_err(|e| ControlError::Solver(e.to_string()))?;
    match milp::solve_milp(&mut model, config) {
        Ok(sol) => {
            let inputs = us
                .iter()
                .map(|uv| DVector::from_fn(m, |l, _| sol.value(uv.at(l, 0))))
                .collect();
            let modes = deltas
                .iter()
                .map(|ds| {
                    ds.iter()
                        .enumerate()
                        .max_by(|a, b| sol.value(*a.1).total_cmp(&sol.value(*b.1)))
                        .map(|(i, _)| i)
                        .unwrap_or(0)
                })
                .collect();
            Ok(PointMpc { inputs, modes, objective: sol.objective })
        }
        Err(MilpError::Infeasible) => Err(ControlError::Infeasible),
        Err(e) => Err(ControlError::Solver(e.to_string())),
    }
}

/// Smallest horizon `T <= t_cap` at which the point MPC is feasible.
pub fn mpc_feasibility_horizon(
    system: &PwaSystem,
    x0: &DVector<f64>,
    t_cap: usize,
    config: &MilpConfig,
) -> Option<usize> {
    for t in 1..=t_cap {
        match point_mpc(system, x0, t, config) {
            Ok(_) => return Some(t),
            Err(ControlError::Infeasible) => continue,
            Err(_) => return None,
        }
    }
    None
}
