//! Template polytopes: the pre-defined set `P` whose affine images make up
//! all node polytopes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GeometryError, HPolytope};

/// A template polytope containing the origin in its interior.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplatePolytope {
    poly: HPolytope,
    is_unit_cube: bool,
    /// `p in P  =>  -p in P`.
    symmetric: bool,
}

impl TemplatePolytope {
    /// The unit cube `[-1, 1]^n`, the default template.
    pub fn unit_cube(n: usize) -> TemplatePolytope {
        let lo = vec![-1.0; n];
        let hi = vec![1.0; n];
        TemplatePolytope {
            poly: HPolytope::from_box(&lo, &hi),
            is_unit_cube: true,
            symmetric: true,
        }
    }

    /// General template. Fails when the origin is not strictly interior.
    pub fn general(poly: HPolytope, symmetric: bool) -> Result<TemplatePolytope, GeometryError> {
        let origin = DVector::zeros(poly.dim());
        if poly.margin(&origin) <= 0.0 {
            return Err(GeometryError::InvalidPolytope(
                "template must contain the origin in its interior".into(),
            ));
        }
        Ok(TemplatePolytope { poly, is_unit_cube: false, symmetric })
    }

    pub fn dim(&self) -> usize {
        self.poly.dim()
    }

    pub fn is_unit_cube(&self) -> bool {
        self.is_unit_cube
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn hform(&self) -> &HPolytope {
        &self.poly
    }

    pub fn contains(&self, p: &DVector<f64>, tol: f64) -> bool {
        if self.is_unit_cube {
            p.iter().all(|v| v.abs() <= 1.0 + tol)
        } else {
            self.poly.contains(p, tol)
        }
    }
}

/// Wire format: the string `"unit_cube"` or an explicit halfspace system.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TemplateWire {
    Named(String),
    General {
        #[serde(rename = "H")]
        h_matrix: Vec<Vec<f64>>,
        #[serde(rename = "h")]
        h_vector: Vec<f64>,
        #[serde(default)]
        symmetric: bool,
    },
}

impl Serialize for TemplatePolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_unit_cube {
            TemplateWire::Named("unit_cube".into()).serialize(s)
        } else {
            let rows: Vec<Vec<f64>> = (0..self.poly.num_rows())
                .map(|i| self.poly.matrix().row(i).iter().copied().collect())
                .collect();
            TemplateWire::General {
                h_matrix: rows,
                h_vector: self.poly.rhs().iter().copied().collect(),
                symmetric: self.symmetric,
            }
            .serialize(s)
        }
    }
}

/// Deserialization needs the ambient dimension for `"unit_cube"`, so node
/// containers deserialize templates through this helper.
pub(crate) fn template_from_wire(
    value: &serde_json::Value,
    dim: usize,
) -> Result<TemplatePolytope, String> {
    match value {
        serde_json::Value::String(s) if s == "unit_cube" => Ok(TemplatePolytope::unit_cube(dim)),
        serde_json::Value::String(s) => Err(format!("unknown template name {s:?}")),
        other => {
            let wire: TemplateWire =
                serde_json::from_value(other.clone()).map_err(|e| e.to_string())?;
            match wire {
                TemplateWire::Named(_) => unreachable!(),
                TemplateWire::General { h_matrix, h_vector, symmetric } => {
                    let nrows = h_matrix.len();
                    let ncols = h_matrix.first().map_or(0, |r| r.len());
                    let a = DMatrix::from_row_iterator(nrows, ncols, h_matrix.into_iter().flatten());
                    let b = DVector::from_vec(h_vector);
                    let poly = HPolytope::new(a, b).map_err(|e| e.to_string())?;
                    TemplatePolytope::general(poly, symmetric).map_err(|e| e.to_string())
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_membership() {
        let t = TemplatePolytope::unit_cube(3);
        assert!(t.contains(&DVector::from_vec(vec![1.0, -1.0, 0.5]), 1e-9));
        assert!(!t.contains(&DVector::from_vec(vec![1.1, 0.0, 0.0]), 1e-9));
        assert!(t.is_unit_cube() && t.is_symmetric());
    }

    #[test]
    fn general_template_requires_interior_origin() {
        let shifted = HPolytope::from_box(&[1.0, 1.0], &[2.0, 2.0]);
        assert!(TemplatePolytope::general(shifted, false).is_err());
        let ok = HPolytope::from_box(&[-0.5, -2.0], &[1.0, 2.0]);
        assert!(TemplatePolytope::general(ok, false).is_ok());
    }
}
