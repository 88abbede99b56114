//! Deterministic branch-and-bound over the simplex core.
//!
//! Search rules: best-bound node selection (ties broken toward deeper nodes,
//! then lower node id, which makes constant-objective feasibility problems
//! dive depth-first), most-fractional binary branching with the rounding
//! direction explored first, and group branching for sum-to-one binary
//! groups whenever every member is fractional. Children warm-start from the
//! parent basis through the dual simplex.

use std::cmp::Ordering as CmpOrdering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use super::model::MilpModel;
use super::simplex::{BasisSnapshot, LpStatus, Simplex, StdForm};
use super::{MilpConfig, MilpError, MilpSolution, SolStatus, SolveStats};

const INT_TOL: f64 = 1e-6;

struct Node {
    /// Bound changes applied at this node on top of its ancestors.
    changes: Vec<(usize, f64, f64)>,
    parent: Option<usize>,
    snapshot: Option<Rc<BasisSnapshot>>,
}

struct Entry {
    bound: f64,
    depth: u32,
    id: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == CmpOrdering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // BinaryHeap pops the maximum; "greater" must mean "pop first":
    // smaller bound, then deeper, then smaller id.
    fn cmp(&self, other: &Self) -> CmpOrdering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| self.depth.cmp(&other.depth))
            .then_with(|| other.id.cmp(&self.id))
    }
}

pub(super) fn solve(model: &MilpModel, config: &MilpConfig) -> Result<MilpSolution, MilpError> {
    let start = Instant::now();
    let f = StdForm::from_model(model);
    let binaries: Vec<usize> = model.binary_ids().iter().map(|v| v.index()).collect();
    let sos1: Vec<Vec<usize>> = model
        .sos1_groups
        .iter()
        .map(|g| g.iter().map(|v| v.index()).collect())
        .collect();

    let mut stats = SolveStats::default();

    // Root relaxation.
    let mut s = Simplex::new(&f);
    let root = s.solve_from_scratch().map_err(|_| MilpError::NumericalFailure)?;
    stats.lp_iterations += root.iterations as u64;
    let (root_obj, root_snapshot) = match root.status {
        LpStatus::Optimal => (root.obj, Rc::new(s.snapshot())),
        LpStatus::Infeasible(_) => return Err(MilpError::Infeasible),
        LpStatus::Unbounded(_) => return Err(MilpError::Unbounded),
    };

    let mut arena: Vec<Node> = Vec::new();
    arena.push(Node { changes: Vec::new(), parent: None, snapshot: None });
    let mut heap = BinaryHeap::new();
    heap.push(Entry { bound: root_obj, depth: 0, id: 0 });

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut best_bound = root_obj;
    let gap_of = |inc: f64, bound: f64| (inc - bound).max(0.0) / inc.abs().max(1.0);

    let mut stop_status: Option<SolStatus> = None;

    while let Some(entry) = heap.pop() {
        best_bound = best_bound.max(entry.bound);
        stats.bound_history.push(entry.bound);
        if let Some((inc_obj, _)) = &incumbent {
            if gap_of(*inc_obj, entry.bound) <= config.gap_tol {
                // Global bound already within gap: done.
                break;
            }
        }
        if stats.nodes >= config.node_limit {
            stop_status = Some(SolStatus::NodeLimit);
            break;
        }
        if let Some(limit) = config.time_limit {
            if start.elapsed() > limit {
                stop_status = Some(SolStatus::Feasible);
                break;
            }
        }
        stats.nodes += 1;

        // Reconstruct bounds along the ancestry.
        let mut s = Simplex::new(&f);
        let mut walk = Some(entry.id);
        let mut chain: Vec<usize> = Vec::new();
        while let Some(id) = walk {
            chain.push(id);
            walk = arena[id].parent;
        }
        for id in chain.iter().rev() {
            for &(j, lo, hi) in &arena[*id].changes {
                s.set_var_bounds(j, lo, hi);
            }
        }
        let warm = arena[entry.id]
            .snapshot
            .clone()
            .unwrap_or_else(|| root_snapshot.clone());
        let res = s.solve_warm(&warm).map_err(|_| MilpError::NumericalFailure)?;
        stats.lp_iterations += res.iterations as u64;
        let obj = match res.status {
            LpStatus::Optimal => res.obj,
            LpStatus::Infeasible(_) => continue,
            LpStatus::Unbounded(_) => return Err(MilpError::Unbounded),
        };
        if let Some((inc_obj, _)) = &incumbent {
            if gap_of(*inc_obj, obj) <= config.gap_tol {
                continue;
            }
        }
        // Integrality.
        let values: Vec<f64> = (0..f.n_struct).map(|j| s.value(j)).collect();
        let frac = |v: f64| (v - v.round()).abs();
        let fractional: Vec<usize> = binaries.iter().copied().filter(|&j| frac(values[j]) > INT_TOL).collect();
        if fractional.is_empty() {
            let better = incumbent.as_ref().map_or(true, |(inc, _)| obj < inc - 1e-12);
            if better {
                incumbent = Some((obj, values));
            }
            continue;
        }
        // Branch. Group rule first: a sum-to-one group with every member fractional.
        let snapshot = Rc::new(s.snapshot());
        let group = sos1
            .iter()
            .find(|g| !g.is_empty() && g.iter().all(|&j| frac(values[j]) > INT_TOL));
        if let Some(group) = group {
            // One child per member, fixing it to 1 and the rest to 0;
            // explored in descending LP-value order.
            let mut order: Vec<usize> = group.clone();
            order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
            for &pick in &order {
                let mut changes = Vec::with_capacity(group.len());
                for &j in group {
                    if j == pick {
                        changes.push((j, 1.0, 1.0));
                    } else {
                        changes.push((j, 0.0, 0.0));
                    }
                }
                push_child(&mut arena, &mut heap, entry.id, obj, entry.depth + 1, changes, &snapshot);
            }
        } else {
            // Most fractional binary, ties by lowest index.
            let j = *fractional
                .iter()
                .min_by(|&&a, &&b| {
                    let fa = (values[a] - 0.5).abs();
                    let fb = (values[b] - 0.5).abs();
                    fa.total_cmp(&fb).then(a.cmp(&b))
                })
                .unwrap();
            let first_up = values[j] >= 0.5;
            let dirs = if first_up { [1.0, 0.0] } else { [0.0, 1.0] };
            for v in dirs {
                push_child(
                    &mut arena,
                    &mut heap,
                    entry.id,
                    obj,
                    entry.depth + 1,
                    vec![(j, v, v)],
                    &snapshot,
                );
            }
        }
    }

    stats.wall_time = start.elapsed();
    match incumbent {
        Some((obj, values)) => {
            let max_violation = model.max_violation(&values);
            if max_violation > 1e-7 {
                return Err(MilpError::NumericalFailure);
            }
            let gap = if heap.is_empty() && stop_status.is_none() {
                0.0
            } else {
                gap_of(obj, best_bound)
            };
            let status = match stop_status {
                Some(st) => st,
                None => {
                    if gap <= 1e-6 {
                        SolStatus::Optimal
                    } else {
                        SolStatus::GapLimit
                    }
                }
            };
            Ok(MilpSolution {
                status,
                values,
                objective: obj,
                gap,
                stats,
                max_violation,
            })
        }
        None => match stop_status {
            Some(SolStatus::NodeLimit) => Err(MilpError::NodeLimit),
            Some(_) => Err(MilpError::TimeLimit),
            None => Err(MilpError::Infeasible),
        },
    }
}

fn push_child(
    arena: &mut Vec<Node>,
    heap: &mut BinaryHeap<Entry>,
    parent: usize,
    bound: f64,
    depth: u32,
    changes: Vec<(usize, f64, f64)>,
    snapshot: &Rc<BasisSnapshot>,
) {
    let id = arena.len();
    arena.push(Node { changes, parent: Some(parent), snapshot: Some(snapshot.clone()) });
    heap.push(Entry { bound, depth, id });
}

#[cfg(test)]
mod tests {
    use crate::milp::model::{LinExpr, MilpModel};
    use crate::milp::{solve_milp, MilpConfig, MilpError, SolStatus};
    use rand::{Rng, SeedableRng};

    #[test]
    fn knapsack_two_items() {
        // min -(3a + 2b) s.t. a + b <= 1, binary.
        let mut m = MilpModel::new();
        let a = m.add_binary().unwrap();
        let b = m.add_binary().unwrap();
        let mut e = LinExpr::new();
        e.add_term(a, 1.0).add_term(b, 1.0);
        m.add_le(e, 1.0).unwrap();
        let mut obj = LinExpr::new();
        obj.add_term(a, -3.0).add_term(b, -2.0);
        m.set_objective(obj).unwrap();
        let sol = solve_milp(&mut m, &MilpConfig::default()).unwrap();
        assert_eq!(sol.status, SolStatus::Optimal);
        assert!((sol.objective + 3.0).abs() < 1e-9);
        assert!((sol.value(a) - 1.0).abs() < 1e-6);
        assert!(sol.value(b).abs() < 1e-6);
    }

    #[test]
    fn pure_lp_model_matches_solve_lp() {
        let build = || {
            let mut m = MilpModel::new();
            let x = m.add_variable(0.0, 4.0).unwrap();
            let y = m.add_variable(0.0, 4.0).unwrap();
            let mut e = LinExpr::new();
            e.add_term(x, 1.0).add_term(y, 2.0);
            m.add_le(e, 5.0).unwrap();
            let mut obj = LinExpr::new();
            obj.add_term(x, -1.0).add_term(y, -1.0);
            m.set_objective(obj).unwrap();
            m
        };
        let mut m1 = build();
        let milp = solve_milp(&mut m1, &MilpConfig::default()).unwrap();
        let mut m2 = build();
        let lp = crate::milp::solve_lp(&mut m2).unwrap();
        assert!((milp.objective - lp.objective).abs() < 1e-9);
    }

    #[test]
    fn infeasible_binary_model() {
        let mut m = MilpModel::new();
        let a = m.add_binary().unwrap();
        let b = m.add_binary().unwrap();
        let mut e = LinExpr::new();
        e.add_term(a, 1.0).add_term(b, 1.0);
        m.add_ge(e, 3.0).unwrap();
        m.set_objective(LinExpr::constant(0.0)).unwrap();
        let err = solve_milp(&mut m, &MilpConfig::default()).unwrap_err();
        assert!(matches!(err, MilpError::Infeasible));
    }

    fn brute_force_min(
        n_bin: usize,
        solve_fixed: &mut dyn FnMut(&[f64]) -> Option<f64>,
    ) -> Option<f64> {
        let mut best: Option<f64> = None;
        for mask in 0..(1u32 << n_bin) {
            let assign: Vec<f64> = (0..n_bin)
                .map(|k| if mask >> k & 1 == 1 { 1.0 } else { 0.0 })
                .collect();
            if let Some(obj) = solve_fixed(&assign) {
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        best
    }

    #[test]
    fn random_milps_match_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for case in 0..60 {
            let n_bin = rng.gen_range(1..=8);
            let n_cont = rng.gen_range(0..=4);
            let rows = rng.gen_range(1..=6);
            let bin_cost: Vec<f64> = (0..n_bin).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let cont_cost: Vec<f64> = (0..n_cont).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..n_bin + n_cont).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let b: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.0..4.0)).collect();

            let build = |fixed: Option<&[f64]>| {
                let mut m = MilpModel::new();
                let bins: Vec<_> = (0..n_bin)
                    .map(|k| {
                        let v = m.add_binary().unwrap();
                        if let Some(f) = fixed {
                            m.fix(v, f[k]).unwrap();
                        }
                        v
                    })
                    .collect();
                let conts: Vec<_> = (0..n_cont).map(|_| m.add_variable(0.0, 2.0).unwrap()).collect();
                for i in 0..rows {
                    let mut e = LinExpr::new();
                    for (k, v) in bins.iter().enumerate() {
                        e.add_term(*v, a[i][k]);
                    }
                    for (k, v) in conts.iter().enumerate() {
                        e.add_term(*v, a[i][n_bin + k]);
                    }
                    m.add_le(e, b[i]).unwrap();
                }
                let mut obj = LinExpr::new();
                for (k, v) in bins.iter().enumerate() {
                    obj.add_term(*v, bin_cost[k]);
                }
                for (k, v) in conts.iter().enumerate() {
                    obj.add_term(*v, cont_cost[k]);
                }
                m.set_objective(obj).unwrap();
                m
            };

            let got = solve_milp(&mut build(None), &MilpConfig::default());
            let want = brute_force_min(n_bin, &mut |assign| {
                crate::milp::solve_lp(&mut build(Some(assign))).ok().map(|s| s.objective)
            });
            match (got, want) {
                (Ok(sol), Some(w)) => {
                    assert!(
                        (sol.objective - w).abs() < 1e-6,
                        "case {case}: milp {} vs brute force {w}",
                        sol.objective
                    );
                    assert!(sol.max_violation <= 1e-7);
                }
                (Err(MilpError::Infeasible), None) => {}
                (got, want) => panic!("case {case}: {got:?} vs {want:?}"),
            }
        }
    }

    #[test]
    fn determinism_repeated_solves() {
        let build = || {
            let mut m = MilpModel::new();
            let bins: Vec<_> = (0..6).map(|_| m.add_binary().unwrap()).collect();
            let mut e = LinExpr::new();
            for (k, v) in bins.iter().enumerate() {
                e.add_term(*v, 1.0 + k as f64 * 0.3);
            }
            m.add_ge(e.clone(), 2.5).unwrap();
            let mut obj = LinExpr::new();
            for (k, v) in bins.iter().enumerate() {
                obj.add_term(*v, (k as f64 - 2.5).abs());
            }
            m.set_objective(obj).unwrap();
            m
        };
        let a = solve_milp(&mut build(), &MilpConfig::default()).unwrap();
        let b = solve_milp(&mut build(), &MilpConfig::default()).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.values(), b.values());
    }
}
