//! Mixed-integer encoding of a trajectory query.

use nalgebra::{DMatrix, DVector};

use super::{Anchor, PolytopicTrajectory, TrajError, TrajectoryQuery};
use crate::geometry::{encode_containment, ContainmentCertificate, MatrixExpr};
use crate::milp::{LinExpr, MatrixVar, MilpModel, MilpSolution, VarId};

/// Built model plus the handles needed to read a trajectory back out.
pub struct TrajModel {
    pub model: MilpModel,
    n: usize,
    m: usize,
    n_p: usize,
    horizon: usize,
    xbar: Vec<MatrixVar>,
    g_exprs: Vec<MatrixExpr>,
    ubar: Vec<MatrixVar>,
    theta: Vec<MatrixVar>,
    deltas: Vec<Vec<VarId>>,
    cell_certs: Vec<ContainmentCertificate>,
    terminal_cert: ContainmentCertificate,
}

pub fn build_model(query: &TrajectoryQuery) -> Result<TrajModel, TrajError> {
    let sys = query.system;
    let n = sys.n;
    let m = sys.m;
    let n_p = query.template.dim();
    let horizon = query.horizon;
    let n_modes = sys.modes.len();
    if horizon == 0 {
        return Err(TrajError::InvalidQuery("horizon must be at least 1".into()));
    }
    if query.targets.is_empty() {
        return Err(TrajError::EmptyTargets);
    }
    for (i, t) in query.targets.iter().enumerate() {
        if t.dim() != n {
            return Err(TrajError::DimensionMismatch(format!(
                "target {i} has dimension {}, state dimension is {n}",
                t.dim()
            )));
        }
    }
    if let Anchor::NearPoint { x, eta } = &query.anchor {
        if x.len() != n || eta.len() != n {
            return Err(TrajError::DimensionMismatch("anchor dimensions".into()));
        }
        if eta.iter().any(|e| *e < 0.0) {
            return Err(TrajError::InvalidQuery("anchor slack must be nonnegative".into()));
        }
    }
    if let Some(q) = query.objective.rank {
        if q == 0 || q >= n {
            return Err(TrajError::InvalidQuery(format!("rank restriction {q} outside 1..{n}")));
        }
    }

    let (lo_x, hi_x) = sys.state_box.bounding_box().map_err(TrajError::from)?;
    let (lo_u, hi_u) = sys.input_box.bounding_box().map_err(TrajError::from)?;
    let w_x: Vec<f64> = (0..n).map(|k| (hi_x[k] - lo_x[k]) / 2.0).collect();
    let w_u: Vec<f64> = (0..m).map(|l| (hi_u[l] - lo_u[l]) / 2.0).collect();
    let s_x: Vec<f64> = (0..n).map(|k| lo_x[k].abs().max(hi_x[k].abs())).collect();
    let s_u: Vec<f64> = (0..m).map(|l| lo_u[l].abs().max(hi_u[l].abs())).collect();

    let mut model = MilpModel::new();
    let d_min = query.objective.d_min;

    // Set centers and feedback offsets.
    let mut xbar = Vec::with_capacity(horizon + 1);
    for tau in 0..=horizon {
        let v = model.add_matrix(n, 1, 0.0, 0.0).map_err(TrajError::from)?;
        // Bounds come from the state box; the anchor tightens step zero.
        for k in 0..n {
            let (mut lo, mut hi) = (lo_x[k], hi_x[k]);
            if tau == 0 {
                if let Anchor::NearPoint { x, eta } = &query.anchor {
                    lo = lo.max(x[k] - eta[k]);
                    hi = hi.min(x[k] + eta[k]);
                }
            }
            if lo > hi {
                return Err(TrajError::Infeasible);
            }
            set_bounds(&mut model, v.at(k, 0), lo, hi)?;
        }
        xbar.push(v);
    }
    let mut ubar = Vec::with_capacity(horizon);
    let mut theta = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let uv = model.add_matrix(m, 1, 0.0, 0.0).map_err(TrajError::from)?;
        for l in 0..m {
            set_bounds(&mut model, uv.at(l, 0), lo_u[l], hi_u[l])?;
        }
        ubar.push(uv);
        let tv = model.add_matrix(m, n_p, 0.0, 0.0).map_err(TrajError::from)?;
        for l in 0..m {
            for j in 0..n_p {
                set_bounds(&mut model, tv.at(l, j), -w_u[l], w_u[l])?;
            }
        }
        theta.push(tv);
    }

    // Set maps. Step zero carries the volume structure.
    let mut g_exprs: Vec<MatrixExpr> = Vec::with_capacity(horizon + 1);
    let mut obj_diag: Vec<VarId> = Vec::new();
    match query.objective.rank {
        None => {
            let g0 = model.add_matrix(n, n_p, 0.0, 0.0).map_err(TrajError::from)?;
            for r in 0..n {
                for c in 0..n_p {
                    if c > r {
                        set_bounds(&mut model, g0.at(r, c), 0.0, 0.0)?;
                    } else if c == r {
                        set_bounds(&mut model, g0.at(r, c), d_min, w_x[r].max(d_min))?;
                    } else {
                        set_bounds(&mut model, g0.at(r, c), -w_x[r], w_x[r])?;
                    }
                }
            }
            for r in 0..n.min(n_p) {
                obj_diag.push(g0.at(r, r));
            }
            g_exprs.push(MatrixExpr::from_var(&g0));
        }
        Some(q) => {
            // G_0 = Gf * Gq with Gq the fixed rank-q axis selector: only the
            // first q columns of Gf survive, lower-triangular in the block.
            let gf = model.add_matrix(n, n, 0.0, 0.0).map_err(TrajError::from)?;
            for r in 0..n {
                for c in 0..n {
                    if c >= q {
                        set_bounds(&mut model, gf.at(r, c), 0.0, 0.0)?;
                    } else if c > r {
                        set_bounds(&mut model, gf.at(r, c), 0.0, 0.0)?;
                    } else if c == r {
                        set_bounds(&mut model, gf.at(r, c), d_min, w_x[r].max(d_min))?;
                    } else {
                        set_bounds(&mut model, gf.at(r, c), -w_x[r], w_x[r])?;
                    }
                }
            }
            for r in 0..q {
                obj_diag.push(gf.at(r, r));
            }
            let entries: Vec<LinExpr> = (0..n)
                .flat_map(|r| (0..n_p).map(move |c| (r, c)))
                .map(|(r, c)| {
                    if c < q {
                        LinExpr::var(gf.at(r, c))
                    } else {
                        LinExpr::constant(0.0)
                    }
                })
                .collect();
            g_exprs.push(MatrixExpr::from_entries(n, n_p, entries));
        }
    }
    let mut g_vars: Vec<MatrixVar> = Vec::with_capacity(horizon);
    for _ in 1..=horizon {
        let gv = model.add_matrix(n, n_p, 0.0, 0.0).map_err(TrajError::from)?;
        for r in 0..n {
            for c in 0..n_p {
                set_bounds(&mut model, gv.at(r, c), -w_x[r], w_x[r])?;
            }
        }
        g_exprs.push(MatrixExpr::from_var(&gv));
        g_vars.push(gv);
    }

    // Mode binaries, one sum-to-one group per step.
    let mut deltas = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let ds: Result<Vec<_>, _> = (0..n_modes).map(|_| model.add_binary()).collect();
        let ds = ds.map_err(TrajError::from)?;
        let mut sum = LinExpr::new();
        for d in &ds {
            sum.add_term(*d, 1.0);
        }
        model.add_eq(sum, 1.0).map_err(TrajError::from)?;
        model.mark_sos1(ds.clone()).map_err(TrajError::from)?;
        deltas.push(ds);
    }

    // Big-M gated set dynamics per step and mode.
    let big_m_max = query.milp.big_m_max;
    let clamp_m = |raw: f64| -> f64 {
        if raw.is_finite() {
            raw.clamp(10.0, big_m_max)
        } else {
            1e4
        }
    };
    for tau in 0..horizon {
        for (i, md) in sys.modes.iter().enumerate() {
            let delta = deltas[tau][i];
            // Center recursion rows.
            for k in 0..n {
                let mut reach = s_x[k] + md.c[k].abs();
                for j in 0..n {
                    reach += md.a[(k, j)].abs() * s_x[j];
                }
                for l in 0..m {
                    reach += md.b[(k, l)].abs() * s_u[l];
                }
                let m_k = clamp_m(reach);
                let mut expr = LinExpr::new();
                expr.add_term(xbar[tau + 1].at(k, 0), 1.0);
                for j in 0..n {
                    expr.add_term(xbar[tau].at(j, 0), -md.a[(k, j)]);
                }
                for l in 0..m {
                    expr.add_term(ubar[tau].at(l, 0), -md.b[(k, l)]);
                }
                add_big_m_pair(&mut model, &expr, md.c[k], delta, m_k)?;
            }
            // Map recursion rows.
            for k in 0..n {
                let mut reach = w_x[k];
                for j in 0..n {
                    reach += md.a[(k, j)].abs() * w_x[j];
                }
                for l in 0..m {
                    reach += md.b[(k, l)].abs() * w_u[l];
                }
                let m_k = clamp_m(reach);
                for c in 0..n_p {
                    let mut expr = LinExpr::new();
                    expr.add_expr(g_exprs[tau + 1].entry(k, c), 1.0);
                    for j in 0..n {
                        expr.add_expr(g_exprs[tau].entry(j, c), -md.a[(k, j)]);
                    }
                    for l in 0..m {
                        expr.add_term(theta[tau].at(l, c), -md.b[(k, l)]);
                    }
                    add_big_m_pair(&mut model, &expr, 0.0, delta, m_k)?;
                }
            }
        }
    }

    // Cell containment: the stacked state-control polytope lies in the
    // active mode's cell, selectors shared with the dynamics binaries.
    let cells: Vec<&crate::geometry::HPolytope> = sys.modes.iter().map(|md| &md.cell).collect();
    let mut cell_certs = Vec::with_capacity(horizon);
    for tau in 0..horizon {
        let theta_expr = MatrixExpr::from_var(&theta[tau]);
        let q_stack = MatrixExpr::vstack(&[&g_exprs[tau], &theta_expr]);
        let xbar_expr = MatrixExpr::from_var(&xbar[tau]);
        let ubar_expr = MatrixExpr::from_var(&ubar[tau]);
        let qbar_stack = MatrixExpr::vstack(&[&xbar_expr, &ubar_expr]);
        let cert = if n_modes == 1 {
            encode_containment(&mut model, &q_stack, &qbar_stack, query.template.hform(), &cells, None)?
        } else {
            encode_containment(
                &mut model,
                &q_stack,
                &qbar_stack,
                query.template.hform(),
                &cells,
                Some(&deltas[tau]),
            )?
        };
        cell_certs.push(cert);
    }

    // Terminal containment in one of the targets.
    let target_refs: Vec<&crate::geometry::HPolytope> = query.targets.iter().collect();
    let xbar_t = MatrixExpr::from_var(&xbar[horizon]);
    let terminal_cert = encode_containment(
        &mut model,
        &g_exprs[horizon],
        &xbar_t,
        query.template.hform(),
        &target_refs,
        None,
    )?;

    // Volume objective: maximize trace terms and the smallest diagonal.
    let w = query.objective.weights;
    let mut obj = LinExpr::new();
    for d in &obj_diag {
        obj.add_term(*d, -(w.trace + w.l1));
    }
    if w.linf != 0.0 && !obj_diag.is_empty() {
        let t_min = model.add_variable(0.0, f64::INFINITY).map_err(TrajError::from)?;
        for d in &obj_diag {
            let mut e = LinExpr::new();
            e.add_term(t_min, 1.0).add_term(*d, -1.0);
            model.add_le(e, 0.0).map_err(TrajError::from)?;
        }
        obj.add_term(t_min, -w.linf);
    }
    if w.step_trace != 0.0 {
        let per_step = w.step_trace / horizon as f64;
        for gv in &g_vars {
            for r in 0..n.min(n_p) {
                obj.add_term(gv.at(r, r), -per_step);
            }
        }
    }
    model.set_objective(obj).map_err(TrajError::from)?;

    Ok(TrajModel {
        model,
        n,
        m,
        n_p,
        horizon,
        xbar,
        g_exprs,
        ubar,
        theta,
        deltas,
        cell_certs,
        terminal_cert,
    })
}

fn set_bounds(model: &mut MilpModel, var: VarId, lo: f64, hi: f64) -> Result<(), TrajError> {
    model
        .set_bounds(var, lo, hi)
        .map_err(|e| TrajError::Numerical(e.to_string()))
}

/// `-M (1 - δ) <= expr - rhs <= M (1 - δ)` as two rows with a recorded M.
fn add_big_m_pair(
    model: &mut MilpModel,
    expr: &LinExpr,
    rhs: f64,
    delta: VarId,
    big_m: f64,
) -> Result<(), TrajError> {
    let mut up = LinExpr::new();
    up.add_expr(expr, 1.0).add_term(delta, big_m);
    model
        .add_big_m_constraint(up, crate::milp::Sense::Le, rhs + big_m, big_m)
        .map_err(TrajError::from)?;
    let mut dn = LinExpr::new();
    dn.add_expr(expr, -1.0).add_term(delta, big_m);
    model
        .add_big_m_constraint(dn, crate::milp::Sense::Le, -rhs + big_m, big_m)
        .map_err(TrajError::from)?;
    Ok(())
}

impl TrajModel {
    /// Binary handles per step (exposed for model-size assertions).
    pub fn mode_binaries(&self) -> &[Vec<VarId>] {
        &self.deltas
    }

    pub fn terminal_certificate(&self) -> &ContainmentCertificate {
        &self.terminal_cert
    }

    /// Reads a trajectory out of a solved model.
    pub fn extract(
        &self,
        query: &TrajectoryQuery,
        sol: &MilpSolution,
    ) -> Result<PolytopicTrajectory, TrajError> {
        let values = sol.values();
        let mut xbar = Vec::with_capacity(self.horizon + 1);
        let mut g = Vec::with_capacity(self.horizon + 1);
        for tau in 0..=self.horizon {
            xbar.push(DVector::from_fn(self.n, |k, _| sol.value(self.xbar[tau].at(k, 0))));
            g.push(DMatrix::from_fn(self.n, self.n_p, |r, c| {
                self.g_exprs[tau].entry(r, c).eval(values)
            }));
        }
        let mut ubar = Vec::with_capacity(self.horizon);
        let mut theta = Vec::with_capacity(self.horizon);
        let mut modes = Vec::with_capacity(self.horizon);
        let mut multipliers = Vec::with_capacity(self.horizon);
        for tau in 0..self.horizon {
            ubar.push(DVector::from_fn(self.m, |l, _| sol.value(self.ubar[tau].at(l, 0))));
            theta.push(DMatrix::from_fn(self.m, self.n_p, |l, c| {
                sol.value(self.theta[tau].at(l, c))
            }));
            let mode = self.deltas[tau]
                .iter()
                .enumerate()
                .max_by(|a, b| sol.value(*a.1).total_cmp(&sol.value(*b.1)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if sol.value(self.deltas[tau][mode]) < 0.5 {
                return Err(TrajError::Numerical(format!("no active mode at step {tau}")));
            }
            modes.push(mode);
            let cert = &self.cell_certs[tau];
            let lam_idx = if cert.lambdas.len() == 1 { 0 } else { mode };
            multipliers.push(cert.lambda_values(sol, lam_idx));
        }
        let landing = self.terminal_cert.selected_target(sol);
        if query.targets.len() > 1 {
            let picked = self.terminal_cert.deltas[landing];
            if sol.value(picked) < 0.5 {
                return Err(TrajError::Numerical("no terminal target selected".into()));
            }
        }
        Ok(PolytopicTrajectory {
            xbar,
            g,
            ubar,
            theta,
            modes,
            landing,
            objective: sol.objective,
            multipliers,
        })
    }
}
