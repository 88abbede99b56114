//! Affine images of a template polytope.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize};

use super::template::template_from_wire;
use super::{GeometryError, HPolytope, TemplatePolytope, EPSILON};

/// `{xbar} + G * P` for a template polytope `P`.
///
/// Regularized data (`G` with singular values floored at `epsilon`, its
/// inverse and the induced halfspace form) is computed once per polytope and
/// cached; every membership, distance and policy evaluation reuses it.
#[derive(Debug)]
pub struct AhPolytope {
    xbar: DVector<f64>,
    g: DMatrix<f64>,
    template: Arc<TemplatePolytope>,
    reg: OnceLock<Option<Regularized>>,
}

/// Cached singular-value-floored data for square `G`.
#[derive(Clone, Debug)]
pub(crate) struct Regularized {
    pub g_eps: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub hform: HPolytope,
}

#[derive(Clone, Debug)]
pub struct NodeVertices {
    pub points: Vec<DVector<f64>>,
    /// True when only the `2 n_p` axis points were produced.
    pub is_subset: bool,
}

impl AhPolytope {
    pub fn new(
        xbar: DVector<f64>,
        g: DMatrix<f64>,
        template: Arc<TemplatePolytope>,
    ) -> Result<AhPolytope, GeometryError> {
        if g.ncols() != template.dim() {
            return Err(GeometryError::DimensionMismatch(format!(
                "G has {} columns but template dimension is {}",
                g.ncols(),
                template.dim()
            )));
        }
        if g.nrows() != xbar.len() {
            return Err(GeometryError::DimensionMismatch(format!(
                "G has {} rows but xbar has {} entries",
                g.nrows(),
                xbar.len()
            )));
        }
        if xbar.iter().any(|v| !v.is_finite()) || g.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPolytope("non-finite entry".into()));
        }
        Ok(AhPolytope { xbar, g, template, reg: OnceLock::new() })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.xbar
    }

    pub fn map(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn template(&self) -> &Arc<TemplatePolytope> {
        &self.template
    }

    /// Ambient (state) dimension.
    pub fn dim(&self) -> usize {
        self.xbar.len()
    }

    /// Template dimension `n_p`.
    pub fn n_p(&self) -> usize {
        self.template.dim()
    }

    pub fn is_square(&self) -> bool {
        self.g.nrows() == self.g.ncols()
    }

    /// Image of a template point.
    pub fn point_at(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.xbar + &self.g * p
    }

    fn build_regularized(&self, eps: f64) -> Option<Regularized> {
        if !self.is_square() {
            return None;
        }
        let n = self.dim();
        let svd = self.g.clone().svd(true, true);
        let u = svd.u.as_ref()?;
        let v_t = svd.v_t.as_ref()?;
        let mut sigma = DMatrix::zeros(n, n);
        let mut sigma_inv = DMatrix::zeros(n, n);
        for k in 0..n {
            let s = svd.singular_values[k].max(eps);
            sigma[(k, k)] = s;
            sigma_inv[(k, k)] = 1.0 / s;
        }
        let g_eps = u * &sigma * v_t;
        let g_inv = v_t.transpose() * &sigma_inv * u.transpose();
        // H-form of the regularized parallelotope (unit-cube template):
        // |G_eps^{-1} (x - xbar)| <= 1 componentwise.
        let hform = if self.template.is_unit_cube() {
            let mut a = DMatrix::zeros(2 * n, n);
            let mut b = DVector::zeros(2 * n);
            let ginv_xbar = &g_inv * &self.xbar;
            for r in 0..n {
                for c in 0..n {
                    a[(r, c)] = g_inv[(r, c)];
                    a[(n + r, c)] = -g_inv[(r, c)];
                }
                b[r] = 1.0 + ginv_xbar[r];
                b[n + r] = 1.0 - ginv_xbar[r];
            }
            HPolytope::new(a, b).ok()?
        } else {
            // H_p G^{-1} x <= h_p + H_p G^{-1} xbar.
            let hp = self.template.hform();
            let a = hp.matrix() * &g_inv;
            let b = hp.rhs() + hp.matrix() * (&g_inv * &self.xbar);
            HPolytope::new(a, b).ok()?
        };
        Some(Regularized { g_eps, g_inv, hform })
    }

    /// Regularized data at floor `eps`; cached for the default [`EPSILON`].
    pub(crate) fn regularized(&self, eps: f64) -> Option<Regularized> {
        if (eps - EPSILON).abs() < 1e-300 {
            self.reg.get_or_init(|| self.build_regularized(EPSILON)).clone()
        } else {
            self.build_regularized(eps)
        }
    }

    /// Halfspace form of the epsilon-regularized set. Errors for non-square
    /// maps, which have no parallelotope H-form.
    pub fn hform_eps(&self, eps: f64) -> Result<HPolytope, GeometryError> {
        self.regularized(eps)
            .map(|r| r.hform)
            .ok_or_else(|| GeometryError::DimensionMismatch("non-square map has no H-form".into()))
    }

    /// Full vertex set `xbar + G s`, `s in {-1,1}^{n_p}`, when `n_p <= 12`;
    /// otherwise the `2 n_p` axis points `xbar +/- G e_k`, flagged as subset.
    pub fn vertices(&self) -> NodeVertices {
        let n_p = self.n_p();
        if n_p <= 12 {
            let count = 1usize << n_p;
            let mut points = Vec::with_capacity(count);
            let mut s = DVector::zeros(n_p);
            for mask in 0..count {
                for k in 0..n_p {
                    s[k] = if mask >> k & 1 == 1 { 1.0 } else { -1.0 };
                }
                points.push(self.point_at(&s));
            }
            NodeVertices { points, is_subset: false }
        } else {
            let mut points = Vec::with_capacity(2 * n_p);
            for k in 0..n_p {
                let col = self.g.column(k);
                points.push(&self.xbar + &col);
                points.push(&self.xbar - &col);
            }
            NodeVertices { points, is_subset: true }
        }
    }
}

impl Clone for AhPolytope {
    fn clone(&self) -> Self {
        let reg = OnceLock::new();
        if let Some(r) = self.reg.get() {
            let _ = reg.set(r.clone());
        }
        AhPolytope {
            xbar: self.xbar.clone(),
            g: self.g.clone(),
            template: self.template.clone(),
            reg,
        }
    }
}

impl PartialEq for AhPolytope {
    fn eq(&self, other: &Self) -> bool {
        self.xbar == other.xbar && self.g == other.g && self.template == other.template
    }
}

impl Serialize for AhPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("AhPolytope", 3)?;
        st.serialize_field("xbar", &self.xbar.as_slice())?;
        let g_rows: Vec<Vec<f64>> = (0..self.g.nrows())
            .map(|i| self.g.row(i).iter().copied().collect())
            .collect();
        st.serialize_field("G", &g_rows)?;
        st.serialize_field("template", self.template.as_ref())?;
        st.end()
    }
}

#[derive(Deserialize)]
struct AhWire {
    xbar: Vec<f64>,
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    template: serde_json::Value,
}

impl<'de> Deserialize<'de> for AhPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = AhWire::deserialize(d)?;
        let nrows = wire.g.len();
        let ncols = wire.g.first().map_or(0, |r| r.len());
        if wire.g.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged G matrix"));
        }
        let g = DMatrix::from_row_iterator(nrows, ncols, wire.g.into_iter().flatten());
        let xbar = DVector::from_vec(wire.xbar);
        let template = template_from_wire(&wire.template, ncols).map_err(serde::de::Error::custom)?;
        AhPolytope::new(xbar, g, Arc::new(template)).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn identity_vertices() {
        let v = node(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]).vertices();
        assert_eq!(v.points.len(), 4);
        assert!(!v.is_subset);
        for p in &v.points {
            assert!(p.iter().all(|c| c.abs() == 1.0));
        }
    }

    #[test]
    fn scaled_shifted_vertices() {
        let v = node(&[1.0, 0.0], &[2.0, 0.0, 0.0, 1.0]).vertices();
        let mut got: Vec<(i64, i64)> = v
            .points
            .iter()
            .map(|p| (p[0].round() as i64, p[1].round() as i64))
            .collect();
        got.sort_unstable();
        assert_eq!(got, vec![(-1, -1), (-1, 1), (3, -1), (3, 1)]);
    }

    #[test]
    fn high_dimension_axis_subset() {
        let n = 13;
        let xbar = DVector::zeros(n);
        let g = DMatrix::identity(n, n);
        let p = AhPolytope::new(xbar, g, Arc::new(TemplatePolytope::unit_cube(n))).unwrap();
        let v = p.vertices();
        assert_eq!(v.points.len(), 26);
        assert!(v.is_subset);
    }

    #[test]
    fn regularized_floors_singular_values() {
        let p = node(&[0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]);
        let reg = p.regularized(1e-5).unwrap();
        let svd = reg.g_eps.clone().svd(false, false);
        assert!(svd.singular_values.iter().all(|s| *s >= 1e-5 - 1e-12));
        // Inverse really inverts.
        let id = &reg.g_inv * &reg.g_eps;
        assert!((id - DMatrix::<f64>::identity(2, 2)).norm() < 1e-9);
    }

    #[test]
    fn hform_matches_membership() {
        let p = node(&[0.5, -0.5], &[1.0, 0.25, 0.0, 2.0]);
        let h = p.hform_eps(1e-5).unwrap();
        for (q, want) in [
            (DVector::from_vec(vec![0.5, -0.5]), true),
            // xbar + G * (0.9, 0.9).
            (DVector::from_vec(vec![1.625, 1.3]), true),
            (DVector::from_vec(vec![2.0, 3.0]), false),
        ] {
            assert_eq!(h.contains(&q, 1e-9), want, "point {q:?}");
        }
    }

    #[test]
    fn json_round_trip() {
        let p = node(&[0.25, 1.0], &[1.0, 0.5, 0.0, 2.0]);
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"unit_cube\""));
        let q: AhPolytope = serde_json::from_str(&text).unwrap();
        assert_eq!(p, q);
    }
}
