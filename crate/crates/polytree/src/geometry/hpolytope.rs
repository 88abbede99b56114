//! Halfspace-representation polytopes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::milp::{self, LinExpr, LpError, MilpModel};

/// `{x | a x <= b}` in dimension `a.ncols()`.
#[derive(Clone, Debug, PartialEq)]
pub struct HPolytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl HPolytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<HPolytope, GeometryError> {
        if a.nrows() != b.len() {
            return Err(GeometryError::DimensionMismatch(format!(
                "H has {} rows but h has {} entries",
                a.nrows(),
                b.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPolytope("non-finite entry".into()));
        }
        for i in 0..a.nrows() {
            if a.row(i).iter().all(|v| *v == 0.0) {
                return Err(GeometryError::InvalidPolytope(format!("all-zero row {i}")));
            }
        }
        Ok(HPolytope { a, b })
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> HPolytope {
        let n = lo.len();
        assert_eq!(n, hi.len());
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for k in 0..n {
            a[(k, k)] = 1.0;
            b[k] = hi[k];
            a[(n + k, k)] = -1.0;
            b[n + k] = -lo[k];
        }
        HPolytope { a, b }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.margin(x) >= -tol
    }

    /// Smallest slack `min_i (h_i - H_i x)`; negative outside.
    pub fn margin(&self, x: &DVector<f64>) -> f64 {
        let mut worst = f64::INFINITY;
        for i in 0..self.a.nrows() {
            let lhs: f64 = self.a.row(i).iter().zip(x.iter()).map(|(c, v)| c * v).sum();
            worst = worst.min(self.b[i] - lhs);
        }
        worst
    }

    /// Cartesian product `self x other` as a block halfspace system.
    pub fn product(&self, other: &HPolytope) -> HPolytope {
        let (n1, n2) = (self.dim(), other.dim());
        let (m1, m2) = (self.num_rows(), other.num_rows());
        let mut a = DMatrix::zeros(m1 + m2, n1 + n2);
        let mut b = DVector::zeros(m1 + m2);
        a.view_mut((0, 0), (m1, n1)).copy_from(&self.a);
        a.view_mut((m1, n1), (m2, n2)).copy_from(&other.a);
        b.rows_mut(0, m1).copy_from(&self.b);
        b.rows_mut(m1, m2).copy_from(&other.b);
        HPolytope { a, b }
    }

    /// Componentwise min/max over the polytope via `2n` LPs.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>), GeometryError> {
        let n = self.dim();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for k in 0..n {
            for (minimize, out) in [(true, &mut lo), (false, &mut hi)] {
                let mut model = MilpModel::new();
                let x = model.add_matrix(n, 1, f64::NEG_INFINITY, f64::INFINITY)?;
                for i in 0..self.num_rows() {
                    let mut e = LinExpr::new();
                    for j in 0..n {
                        e.add_term(x.at(j, 0), self.a[(i, j)]);
                    }
                    model.add_le(e, self.b[i])?;
                }
                let sign = if minimize { 1.0 } else { -1.0 };
                model.set_objective(LinExpr::term(x.at(k, 0), sign))?;
                match milp::solve_lp(&mut model) {
                    Ok(sol) => out[k] = sol.value(x.at(k, 0)),
                    Err(LpError::Unbounded(_)) => return Err(GeometryError::Unbounded),
                    Err(LpError::Infeasible(_)) => return Err(GeometryError::Empty),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok((lo, hi))
    }
}

#[derive(Serialize, Deserialize)]
struct HPolytopeWire {
    #[serde(rename = "H")]
    h_matrix: Vec<Vec<f64>>,
    #[serde(rename = "h")]
    h_vector: Vec<f64>,
}

impl Serialize for HPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..self.a.nrows())
            .map(|i| self.a.row(i).iter().copied().collect())
            .collect();
        HPolytopeWire { h_matrix: rows, h_vector: self.b.iter().copied().collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for HPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = HPolytopeWire::deserialize(d)?;
        let nrows = wire.h_matrix.len();
        let ncols = wire.h_matrix.first().map_or(0, |r| r.len());
        if wire.h_matrix.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged H matrix"));
        }
        let a = DMatrix::from_row_iterator(nrows, ncols, wire.h_matrix.into_iter().flatten());
        let b = DVector::from_vec(wire.h_vector);
        HPolytope::new(a, b).map_err(serde::de::Error::custom)
    }
}
