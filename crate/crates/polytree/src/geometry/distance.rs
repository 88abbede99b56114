//! Point-to-node distances: the closed form used online and the LP form
//! it is validated against.

use nalgebra::DVector;

use super::{AhPolytope, GeometryError, MEMBERSHIP_TOL};
use crate::milp::{self, LinExpr, LpError, MilpModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L1,
    Linf,
}

/// Closed-form distance from `x` to the epsilon-regularized node:
/// `|| G_eps (p - clamp(p)) ||_inf` with `p = G_eps^{-1} (x - xbar)`.
/// Zero exactly when the point is a member. Non-square maps fall back to the
/// LP distance.
pub fn distance_to_node(x: &DVector<f64>, node: &AhPolytope, eps: f64) -> f64 {
    match node.regularized(eps) {
        Some(reg) => {
            let p = &reg.g_inv * (x - node.center());
            let mut diff = DVector::zeros(p.len());
            let mut all_inside = true;
            for k in 0..p.len() {
                let clamped = p[k].clamp(-1.0, 1.0);
                diff[k] = p[k] - clamped;
                if diff[k] != 0.0 {
                    all_inside = false;
                }
            }
            if all_inside {
                return 0.0;
            }
            (reg.g_eps * diff).amax()
        }
        None => lp_distance(x, node, Norm::Linf).unwrap_or(f64::INFINITY),
    }
}

/// Membership test with the template-space witness `p`.
///
/// For square maps `p = G_eps^{-1}(x - xbar)` and membership means the
/// closed-form distance vanishes (within [`MEMBERSHIP_TOL`]). For non-square
/// maps the witness comes from an LP with an `l1` cost on `p`.
pub fn point_membership(x: &DVector<f64>, node: &AhPolytope, eps: f64) -> (bool, DVector<f64>) {
    if let Some(reg) = node.regularized(eps) {
        let p = &reg.g_inv * (x - node.center());
        let d = distance_to_node(x, node, eps);
        return (d <= MEMBERSHIP_TOL, p);
    }
    // Non-square: feasibility of x = xbar + G p, p in P, with min ||p||_1.
    match solve_witness_lp(x, node) {
        Ok(Some(p)) => (true, p),
        _ => {
            let p = DVector::zeros(node.n_p());
            (false, p)
        }
    }
}

fn solve_witness_lp(x: &DVector<f64>, node: &AhPolytope) -> Result<Option<DVector<f64>>, GeometryError> {
    let n = node.dim();
    let n_p = node.n_p();
    let inf = f64::INFINITY;
    let mut model = MilpModel::new();
    let p = model.add_matrix(n_p, 1, -inf, inf).map_err(GeometryError::from)?;
    let t = model.add_matrix(n_p, 1, 0.0, inf).map_err(GeometryError::from)?;
    let tp = node.template().hform();
    for r in 0..tp.num_rows() {
        let mut e = LinExpr::new();
        for c in 0..n_p {
            e.add_term(p.at(c, 0), tp.matrix()[(r, c)]);
        }
        model.add_le(e, tp.rhs()[r]).map_err(GeometryError::from)?;
    }
    for k in 0..n {
        let mut e = LinExpr::new();
        for c in 0..n_p {
            e.add_term(p.at(c, 0), node.map()[(k, c)]);
        }
        model.add_eq(e, x[k] - node.center()[k]).map_err(GeometryError::from)?;
    }
    // l1 cost on p for a deterministic witness.
    let mut obj = LinExpr::new();
    for k in 0..n_p {
        obj.add_term(t.at(k, 0), 1.0);
        let mut up = LinExpr::new();
        up.add_term(p.at(k, 0), 1.0).add_term(t.at(k, 0), -1.0);
        model.add_le(up, 0.0).map_err(GeometryError::from)?;
        let mut dn = LinExpr::new();
        dn.add_term(p.at(k, 0), -1.0).add_term(t.at(k, 0), -1.0);
        model.add_le(dn, 0.0).map_err(GeometryError::from)?;
    }
    model.set_objective(obj).map_err(GeometryError::from)?;
    match milp::solve_lp(&mut model) {
        Ok(sol) => {
            let w = DVector::from_fn(n_p, |k, _| sol.value(p.at(k, 0)));
            Ok(Some(w))
        }
        Err(LpError::Infeasible(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Exact `min ||delta||` with `x + delta = xbar + G p`, `p in P`.
/// LP for both supported norms; `l2` is intentionally not offered so the
/// engine stays LP-only.
pub fn lp_distance(x: &DVector<f64>, node: &AhPolytope, norm: Norm) -> Result<f64, GeometryError> {
    let n = node.dim();
    let n_p = node.n_p();
    let inf = f64::INFINITY;
    let mut model = MilpModel::new();
    let p = model.add_matrix(n_p, 1, -inf, inf).map_err(GeometryError::from)?;
    let tp = node.template().hform();
    for r in 0..tp.num_rows() {
        let mut e = LinExpr::new();
        for c in 0..n_p {
            e.add_term(p.at(c, 0), tp.matrix()[(r, c)]);
        }
        model.add_le(e, tp.rhs()[r]).map_err(GeometryError::from)?;
    }
    // delta_k = xbar_k + (G p)_k - x_k, bounded by the norm epigraph.
    let mut obj = LinExpr::new();
    let tvars = match norm {
        Norm::Linf => {
            let t = model.add_variable(0.0, inf).map_err(GeometryError::from)?;
            obj.add_term(t, 1.0);
            vec![t; n]
        }
        Norm::L1 => {
            let tm = model.add_matrix(n, 1, 0.0, inf).map_err(GeometryError::from)?;
            let ts: Vec<_> = (0..n).map(|k| tm.at(k, 0)).collect();
            for t in &ts {
                obj.add_term(*t, 1.0);
            }
            ts
        }
    };
    for k in 0..n {
        // -t_k <= (G p)_k - (x_k - xbar_k) <= t_k.
        let rhs = x[k] - node.center()[k];
        let mut up = LinExpr::new();
        for c in 0..n_p {
            up.add_term(p.at(c, 0), node.map()[(k, c)]);
        }
        up.add_term(tvars[k], -1.0);
        model.add_le(up, rhs).map_err(GeometryError::from)?;
        let mut dn = LinExpr::new();
        for c in 0..n_p {
            dn.add_term(p.at(c, 0), node.map()[(k, c)]);
        }
        dn.add_term(tvars[k], 1.0);
        model.add_ge(dn, rhs).map_err(GeometryError::from)?;
    }
    model.set_objective(obj).map_err(GeometryError::from)?;
    let sol = milp::solve_lp(&mut model)?;
    Ok(sol.objective)
}

/// Per-node closed-form distances; elementwise equal to scalar calls.
pub fn batch_distance<'a, I>(x: &DVector<f64>, nodes: I, eps: f64) -> Vec<f64>
where
    I: IntoIterator<Item = &'a AhPolytope>,
{
    nodes.into_iter().map(|n| distance_to_node(x, n, eps)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{TemplatePolytope, EPSILON};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn node(xbar: &[f64], g: &[f64]) -> AhPolytope {
        let n = xbar.len();
        AhPolytope::new(
            DVector::from_row_slice(xbar),
            DMatrix::from_row_slice(n, n, g),
            Arc::new(TemplatePolytope::unit_cube(n)),
        )
        .unwrap()
    }

    #[test]
    fn center_maps_to_origin() {
        let v = node(&[2.0, -1.0], &[1.0, 0.0, 0.0, 1.0]);
        let x = DVector::from_vec(vec![2.0, -1.0]);
        let (inside, p) = point_membership(&x, &v, EPSILON);
        assert!(inside);
        assert!(p.amax() < 1e-12);
        assert_eq!(distance_to_node(&x, &v, EPSILON), 0.0);
    }

    #[test]
    fn outside_identity_box() {
        let v = node(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        let x = DVector::from_vec(vec![2.0, 0.0]);
        let (inside, p) = point_membership(&x, &v, EPSILON);
        assert!(!inside);
        assert!((p[0] - 2.0).abs() < 1e-9 && p[1].abs() < 1e-9);
        assert!((distance_to_node(&x, &v, EPSILON) - 1.0).abs() < 1e-9);
        assert!((lp_distance(&x, &v, Norm::Linf).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn degenerate_direction_regularized() {
        // G = [[1,0],[0,0]]: the second direction is flattened; a point on the
        // surviving axis is still recognized as a member.
        let v = node(&[0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]);
        let x = DVector::from_vec(vec![0.5, 0.0]);
        let (inside, p) = point_membership(&x, &v, 1e-5);
        assert!(inside);
        assert!((p[0] - 0.5).abs() < 1e-9);
        // Cross-check with the exact LP membership.
        assert!(lp_distance(&x, &v, Norm::Linf).unwrap() < 1e-9);
    }

    #[test]
    fn anisotropic_distance() {
        let v = node(&[0.0, 0.0], &[2.0, 0.0, 0.0, 1.0]);
        let x = DVector::from_vec(vec![4.0, 0.0]);
        // p = (2, 0), clamp to (1, 0), G*(1,0) = (2,0).
        assert!((distance_to_node(&x, &v, EPSILON) - 2.0).abs() < 1e-9);
        assert!((lp_distance(&x, &v, Norm::Linf).unwrap() - 2.0).abs() < 1e-7);
    }

    #[test]
    fn l1_distance_diagonal_corner() {
        let v = node(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        let x = DVector::from_vec(vec![2.0, 2.0]);
        assert!((lp_distance(&x, &v, Norm::L1).unwrap() - 2.0).abs() < 1e-7);
    }

    #[test]
    fn batch_matches_scalar() {
        let nodes = vec![
            node(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]),
            node(&[10.0, 0.0], &[1.0, 0.0, 0.0, 1.0]),
            node(&[0.0, 10.0], &[1.0, 0.0, 0.0, 1.0]),
        ];
        let x = DVector::zeros(2);
        let d = batch_distance(&x, nodes.iter(), EPSILON);
        assert_eq!(d.len(), 3);
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 9.0).abs() < 1e-9);
        assert!((d[2] - 9.0).abs() < 1e-9);
        for (i, n) in nodes.iter().enumerate() {
            assert_eq!(d[i], distance_to_node(&x, n, EPSILON));
        }
        let empty: Vec<f64> = batch_distance(&x, std::iter::empty(), EPSILON);
        assert!(empty.is_empty());
    }

    #[test]
    fn membership_iff_zero_distance_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let g: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let v = node(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], &g);
            let x = DVector::from_vec(vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            let d = distance_to_node(&x, &v, EPSILON);
            let (inside, _) = point_membership(&x, &v, EPSILON);
            assert_eq!(inside, d <= MEMBERSHIP_TOL);
        }
    }

    #[test]
    fn closed_form_upper_bounds_lp_distance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let g: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v = node(&[0.0, 0.0], &g);
            let x = DVector::from_vec(vec![rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
            let closed = distance_to_node(&x, &v, EPSILON);
            let exact = lp_distance(&x, &v, Norm::Linf).unwrap();
            assert!(
                closed >= exact - 1e-6,
                "closed form {closed} below LP distance {exact}"
            );
        }
    }
}
