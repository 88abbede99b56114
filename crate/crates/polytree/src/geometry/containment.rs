//! Polytope containment encodings.
//!
//! The central device is the multiplier characterization of
//! `Q * Y + qbar ⊆ Z` for halfspace polytopes: nonnegative `Λ` with
//! `Λ H_y = H_z Q` and `Λ h_y <= h_z - H_z qbar`. With several candidate
//! targets the transform is split into per-target parts `(Q_i, qbar_i)`
//! gated by binary selectors that sum to one; relaxing those binaries to
//! `[0,1]` makes the encoding exact for the convex hull of the targets.

use nalgebra::{DMatrix, DVector};

use super::{GeometryError, HPolytope};
use crate::milp::{self, LinExpr, LpError, MatrixVar, MilpModel, MilpSolution, VarId};

/// A matrix whose entries are linear expressions over model variables.
/// Lets one containment encoder serve constant transforms, variable
/// transforms, and stacked blocks of both.
#[derive(Clone, Debug)]
pub struct MatrixExpr {
    rows: usize,
    cols: usize,
    entries: Vec<LinExpr>,
}

impl MatrixExpr {
    pub fn from_const(m: &DMatrix<f64>) -> MatrixExpr {
        let entries = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| LinExpr::constant(m[(r, c)]))
            .collect();
        MatrixExpr { rows: m.nrows(), cols: m.ncols(), entries }
    }

    pub fn from_const_vector(v: &DVector<f64>) -> MatrixExpr {
        let entries = v.iter().map(|&x| LinExpr::constant(x)).collect();
        MatrixExpr { rows: v.len(), cols: 1, entries }
    }

    pub fn from_var(m: &MatrixVar) -> MatrixExpr {
        let entries = (0..m.rows)
            .flat_map(|r| (0..m.cols).map(move |c| (r, c)))
            .map(|(r, c)| LinExpr::var(m.at(r, c)))
            .collect();
        MatrixExpr { rows: m.rows, cols: m.cols, entries }
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<LinExpr>) -> MatrixExpr {
        assert_eq!(entries.len(), rows * cols);
        MatrixExpr { rows, cols, entries }
    }

    /// Vertical stack; all blocks must share a column count.
    pub fn vstack(blocks: &[&MatrixExpr]) -> MatrixExpr {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut entries = Vec::with_capacity(rows * cols);
        for b in blocks {
            assert_eq!(b.cols, cols, "vstack column mismatch");
            entries.extend(b.entries.iter().cloned());
        }
        MatrixExpr { rows, cols, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, r: usize, c: usize) -> &LinExpr {
        &self.entries[r * self.cols + c]
    }

    /// `M * self` for a constant left factor.
    fn premul(&self, m: &DMatrix<f64>) -> MatrixExpr {
        assert_eq!(m.ncols(), self.rows);
        let mut entries = Vec::with_capacity(m.nrows() * self.cols);
        for r in 0..m.nrows() {
            for c in 0..self.cols {
                let mut e = LinExpr::new();
                for k in 0..self.rows {
                    e.add_expr(self.entry(k, c), m[(r, k)]);
                }
                entries.push(e);
            }
        }
        MatrixExpr { rows: m.nrows(), cols: self.cols, entries }
    }
}

/// Handles to the multiplier variables added by [`encode_containment`].
#[derive(Clone, Debug)]
pub struct ContainmentCertificate {
    pub lambdas: Vec<MatrixVar>,
    /// Binary selectors, one per target; empty for a single target.
    pub deltas: Vec<VarId>,
    pub q_parts: Vec<MatrixVar>,
    pub qbar_parts: Vec<MatrixVar>,
}

impl ContainmentCertificate {
    /// Index of the target whose selector is (numerically) one.
    pub fn selected_target(&self, sol: &MilpSolution) -> usize {
        if self.deltas.is_empty() {
            return 0;
        }
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, d) in self.deltas.iter().enumerate() {
            let v = sol.value(*d);
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        best
    }

    pub fn lambda_values(&self, sol: &MilpSolution, i: usize) -> DMatrix<f64> {
        let mv = &self.lambdas[i];
        DMatrix::from_fn(mv.rows, mv.cols, |r, c| sol.value(mv.at(r, c)))
    }
}

/// Adds constraints to `model` certifying `exists i: Q*Y + qbar ⊆ Z_i`.
///
/// With a single target no binary is introduced. With several targets the
/// selectors are `selectors` when given (they must already sum to one in the
/// model, as when reusing per-step mode binaries), else fresh binaries with a
/// sum-to-one row.
pub fn encode_containment(
    model: &mut MilpModel,
    q: &MatrixExpr,
    qbar: &MatrixExpr,
    y: &HPolytope,
    targets: &[&HPolytope],
    selectors: Option<&[VarId]>,
) -> Result<ContainmentCertificate, GeometryError> {
    if targets.is_empty() {
        return Err(GeometryError::DimensionMismatch("empty target list".into()));
    }
    let n_y = y.dim();
    let n_z = q.rows();
    if q.cols() != n_y {
        return Err(GeometryError::DimensionMismatch(format!(
            "Q has {} columns, Y dimension is {}",
            q.cols(),
            n_y
        )));
    }
    if qbar.rows() != n_z || qbar.cols() != 1 {
        return Err(GeometryError::DimensionMismatch("qbar shape".into()));
    }
    for z in targets {
        if z.dim() != n_z {
            return Err(GeometryError::DimensionMismatch(format!(
                "target dimension {} vs transform rows {}",
                z.dim(),
                n_z
            )));
        }
    }
    if let Some(sel) = selectors {
        if sel.len() != targets.len() {
            return Err(GeometryError::DimensionMismatch("selector count".into()));
        }
    }
    let rows_y = y.num_rows();
    let inf = f64::INFINITY;

    if targets.len() == 1 {
        let z = targets[0];
        let rows_z = z.num_rows();
        let lambda = model.add_matrix(rows_z, rows_y, 0.0, inf).map_err(GeometryError::from)?;
        // Λ H_y = H_z Q, entrywise over (rows_z, n_y).
        let hzq = q.premul(z.matrix());
        for r in 0..rows_z {
            for c in 0..n_y {
                let mut e = LinExpr::new();
                for k in 0..rows_y {
                    e.add_term(lambda.at(r, k), y.matrix()[(k, c)]);
                }
                e.add_expr(hzq.entry(r, c), -1.0);
                model.add_eq(e, 0.0).map_err(GeometryError::from)?;
            }
        }
        // Λ h_y + H_z qbar <= h_z.
        let hz_qbar = qbar.premul(z.matrix());
        for r in 0..rows_z {
            let mut e = LinExpr::new();
            for k in 0..rows_y {
                e.add_term(lambda.at(r, k), y.rhs()[k]);
            }
            e.add_expr(hz_qbar.entry(r, 0), 1.0);
            model.add_le(e, z.rhs()[r]).map_err(GeometryError::from)?;
        }
        return Ok(ContainmentCertificate {
            lambdas: vec![lambda],
            deltas: Vec::new(),
            q_parts: Vec::new(),
            qbar_parts: Vec::new(),
        });
    }

    // Multi-target: split transform, one selector per target.
    let deltas: Vec<VarId> = match selectors {
        Some(sel) => sel.to_vec(),
        None => {
            let ds: Result<Vec<_>, _> = targets.iter().map(|_| model.add_binary()).collect();
            let ds = ds.map_err(GeometryError::from)?;
            let mut sum = LinExpr::new();
            for d in &ds {
                sum.add_term(*d, 1.0);
            }
            model.add_eq(sum, 1.0).map_err(GeometryError::from)?;
            model.mark_sos1(ds.clone()).map_err(GeometryError::from)?;
            ds
        }
    };
    let mut lambdas = Vec::with_capacity(targets.len());
    let mut q_parts = Vec::with_capacity(targets.len());
    let mut qbar_parts = Vec::with_capacity(targets.len());
    for (i, z) in targets.iter().enumerate() {
        let rows_z = z.num_rows();
        let lambda = model.add_matrix(rows_z, rows_y, 0.0, inf).map_err(GeometryError::from)?;
        let q_i = model.add_matrix(n_z, n_y, -inf, inf).map_err(GeometryError::from)?;
        let qbar_i = model.add_matrix(n_z, 1, -inf, inf).map_err(GeometryError::from)?;
        // Λ_i H_y = H_{z,i} Q_i.
        for r in 0..rows_z {
            for c in 0..n_y {
                let mut e = LinExpr::new();
                for k in 0..rows_y {
                    e.add_term(lambda.at(r, k), y.matrix()[(k, c)]);
                }
                for k in 0..n_z {
                    e.add_term(q_i.at(k, c), -z.matrix()[(r, k)]);
                }
                model.add_eq(e, 0.0).map_err(GeometryError::from)?;
            }
        }
        // Λ_i h_y + H_{z,i} qbar_i - h_{z,i} δ_i <= 0.
        for r in 0..rows_z {
            let mut e = LinExpr::new();
            for k in 0..rows_y {
                e.add_term(lambda.at(r, k), y.rhs()[k]);
            }
            for k in 0..n_z {
                e.add_term(qbar_i.at(k, 0), z.matrix()[(r, k)]);
            }
            e.add_term(deltas[i], -z.rhs()[r]);
            model.add_le(e, 0.0).map_err(GeometryError::from)?;
        }
        lambdas.push(lambda);
        q_parts.push(q_i);
        qbar_parts.push(qbar_i);
    }
    // Σ Q_i = Q and Σ qbar_i = qbar, entrywise.
    for r in 0..n_z {
        for c in 0..n_y {
            let mut e = LinExpr::new();
            for q_i in &q_parts {
                e.add_term(q_i.at(r, c), 1.0);
            }
            e.add_expr(q.entry(r, c), -1.0);
            model.add_eq(e, 0.0).map_err(GeometryError::from)?;
        }
        let mut e = LinExpr::new();
        for qbar_i in &qbar_parts {
            e.add_term(qbar_i.at(r, 0), 1.0);
        }
        e.add_expr(qbar.entry(r, 0), -1.0);
        model.add_eq(e, 0.0).map_err(GeometryError::from)?;
    }
    Ok(ContainmentCertificate { lambdas, deltas, q_parts, qbar_parts })
}

/// Standalone LP feasibility check of `Q*Y + qbar ⊆ Z` for numeric inputs.
pub fn check_containment(
    q: &DMatrix<f64>,
    qbar: &DVector<f64>,
    y: &HPolytope,
    z: &HPolytope,
) -> Result<bool, GeometryError> {
    let mut model = MilpModel::new();
    let qe = MatrixExpr::from_const(q);
    let qbe = MatrixExpr::from_const_vector(qbar);
    encode_containment(&mut model, &qe, &qbe, y, &[z], None)?;
    model.set_objective(LinExpr::constant(0.0)).map_err(GeometryError::from)?;
    match milp::solve_lp(&mut model) {
        Ok(_) => Ok(true),
        Err(LpError::Infeasible(_)) => Ok(false),
        Err(e) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{solve_milp, MilpConfig, MilpError};

    fn unit_box(n: usize) -> HPolytope {
        HPolytope::from_box(&vec![-1.0; n], &vec![1.0; n])
    }

    #[test]
    fn identity_containment_holds() {
        let y = unit_box(2);
        let z = unit_box(2);
        let q = DMatrix::identity(2, 2);
        let qbar = DVector::zeros(2);
        assert!(check_containment(&q, &qbar, &y, &z).unwrap());
    }

    #[test]
    fn scaled_box_exceeds_target() {
        let y = unit_box(2);
        let z = unit_box(2);
        let q = DMatrix::identity(2, 2) * 2.0;
        let qbar = DVector::zeros(2);
        assert!(!check_containment(&q, &qbar, &y, &z).unwrap());
    }

    #[test]
    fn shifted_half_box_fits() {
        // 0.5*I with offset (0.25, 0): image vertices (0.75, ±0.5), (-0.25, ±0.5).
        let y = unit_box(2);
        let z = unit_box(2);
        let q = DMatrix::identity(2, 2) * 0.5;
        let qbar = DVector::from_vec(vec![0.25, 0.0]);
        assert!(check_containment(&q, &qbar, &y, &z).unwrap());
    }

    #[test]
    fn rotated_square_inside_unit_square() {
        // 45-degree rotation scaled by 1/sqrt(2): vertices (±0.707, 0), (0, ±0.707).
        let y = unit_box(2);
        let z = unit_box(2);
        let c = (0.5f64).sqrt() * (std::f64::consts::FRAC_PI_4).cos();
        let s = (0.5f64).sqrt() * (std::f64::consts::FRAC_PI_4).sin();
        let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let qbar = DVector::zeros(2);
        assert!(check_containment(&q, &qbar, &y, &z).unwrap());
    }

    #[test]
    fn translated_out_of_target() {
        let y = unit_box(2);
        let z = unit_box(2);
        let q = DMatrix::identity(2, 2);
        let qbar = DVector::from_vec(vec![3.0, 0.0]);
        assert!(!check_containment(&q, &qbar, &y, &z).unwrap());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let y = unit_box(2);
        let z = unit_box(3);
        let q = DMatrix::identity(2, 2);
        let qbar = DVector::zeros(2);
        assert!(matches!(
            check_containment(&q, &qbar, &y, &z),
            Err(GeometryError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn multi_target_selects_a_containing_target() {
        // Image is the box [2,4]x[-1,1]; only the second target contains it.
        let y = unit_box(2);
        let z1 = unit_box(2);
        let z2 = HPolytope::from_box(&[1.5, -2.0], &[4.5, 2.0]);
        let mut model = MilpModel::new();
        let q = MatrixExpr::from_const(&DMatrix::identity(2, 2));
        let qbar = MatrixExpr::from_const_vector(&DVector::from_vec(vec![3.0, 0.0]));
        let cert = encode_containment(&mut model, &q, &qbar, &y, &[&z1, &z2], None).unwrap();
        model.set_objective(LinExpr::constant(0.0)).unwrap();
        let sol = solve_milp(&mut model, &MilpConfig::default()).unwrap();
        assert_eq!(cert.selected_target(&sol), 1);
    }

    #[test]
    fn multi_target_infeasible_when_none_contains() {
        let y = unit_box(2);
        let z1 = unit_box(2);
        let z2 = HPolytope::from_box(&[10.0, 10.0], &[11.0, 11.0]);
        let mut model = MilpModel::new();
        let q = MatrixExpr::from_const(&(DMatrix::identity(2, 2) * 3.0));
        let qbar = MatrixExpr::from_const_vector(&DVector::zeros(2));
        encode_containment(&mut model, &q, &qbar, &y, &[&z1, &z2], None).unwrap();
        model.set_objective(LinExpr::constant(0.0)).unwrap();
        assert!(matches!(
            solve_milp(&mut model, &MilpConfig::default()),
            Err(MilpError::Infeasible)
        ));
    }

    #[test]
    fn variable_transform_maximal_scale() {
        // Q = diag(t, t), maximize t subject to Q*[-1,1]^2 ⊆ [-2,2]^2: t = 2.
        let y = unit_box(2);
        let z = HPolytope::from_box(&[-2.0, -2.0], &[2.0, 2.0]);
        let mut model = MilpModel::new();
        let t = model.add_variable(0.0, f64::INFINITY).unwrap();
        let entries = vec![
            LinExpr::var(t),
            LinExpr::constant(0.0),
            LinExpr::constant(0.0),
            LinExpr::var(t),
        ];
        let q = MatrixExpr::from_entries(2, 2, entries);
        let qbar = MatrixExpr::from_const_vector(&DVector::zeros(2));
        encode_containment(&mut model, &q, &qbar, &y, &[&z], None).unwrap();
        model.set_objective(LinExpr::term(t, -1.0)).unwrap();
        let sol = milp::solve_lp(&mut model).unwrap();
        assert!((sol.value(t) - 2.0).abs() < 1e-7);
    }
}
