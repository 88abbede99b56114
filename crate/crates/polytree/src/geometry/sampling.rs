//! Hit-and-run sampling and related interior-point machinery.

use nalgebra::DVector;
use rand::Rng;

use super::{GeometryError, HPolytope};
use crate::milp::{self, LinExpr, LpError, MilpModel};

/// Chebyshev center: the center and radius of the largest inscribed ball.
pub fn chebyshev_center(poly: &HPolytope) -> Result<(DVector<f64>, f64), GeometryError> {
    let n = poly.dim();
    let inf = f64::INFINITY;
    let mut model = MilpModel::new();
    let x = model.add_matrix(n, 1, -inf, inf).map_err(GeometryError::from)?;
    // Cap the radius so the LP stays bounded even for unbounded polyhedra.
    let r = model.add_variable(0.0, 1e9).map_err(GeometryError::from)?;
    for i in 0..poly.num_rows() {
        let row_norm: f64 = poly.matrix().row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut e = LinExpr::new();
        for j in 0..n {
            e.add_term(x.at(j, 0), poly.matrix()[(i, j)]);
        }
        e.add_term(r, row_norm);
        model.add_le(e, poly.rhs()[i]).map_err(GeometryError::from)?;
    }
    model.set_objective(LinExpr::term(r, -1.0)).map_err(GeometryError::from)?;
    match milp::solve_lp(&mut model) {
        Ok(sol) => {
            let center = DVector::from_fn(n, |j, _| sol.value(x.at(j, 0)));
            Ok((center, sol.value(r)))
        }
        Err(LpError::Infeasible(_)) => Err(GeometryError::Empty),
        Err(LpError::Unbounded(_)) => Err(GeometryError::Unbounded),
        Err(e) => Err(e.into()),
    }
}

/// Largest axis-aligned box `z ± r` inscribed in `poly`, by maximizing the
/// sum of half-widths (linear proxy for volume; exact for box-shaped `poly`).
pub fn inscribed_box(poly: &HPolytope) -> Result<(DVector<f64>, DVector<f64>), GeometryError> {
    let n = poly.dim();
    let inf = f64::INFINITY;
    let mut model = MilpModel::new();
    let z = model.add_matrix(n, 1, -inf, inf).map_err(GeometryError::from)?;
    let r = model.add_matrix(n, 1, 0.0, inf).map_err(GeometryError::from)?;
    for i in 0..poly.num_rows() {
        let mut e = LinExpr::new();
        for j in 0..n {
            e.add_term(z.at(j, 0), poly.matrix()[(i, j)]);
            e.add_term(r.at(j, 0), poly.matrix()[(i, j)].abs());
        }
        model.add_le(e, poly.rhs()[i]).map_err(GeometryError::from)?;
    }
    let mut obj = LinExpr::new();
    for j in 0..n {
        obj.add_term(r.at(j, 0), -1.0);
    }
    model.set_objective(obj).map_err(GeometryError::from)?;
    match milp::solve_lp(&mut model) {
        Ok(sol) => Ok((
            DVector::from_fn(n, |j, _| sol.value(z.at(j, 0))),
            DVector::from_fn(n, |j, _| sol.value(r.at(j, 0))),
        )),
        Err(LpError::Infeasible(_)) => Err(GeometryError::Empty),
        Err(LpError::Unbounded(_)) => Err(GeometryError::Unbounded),
        Err(e) => Err(e.into()),
    }
}

/// One hit-and-run sample from a bounded polytope with nonempty interior.
///
/// The chain starts at the Chebyshev center and walks `burn_in` random
/// chords; identical RNG state reproduces identical samples.
pub fn hit_and_run_sample<R: Rng>(
    poly: &HPolytope,
    rng: &mut R,
    burn_in: usize,
) -> Result<DVector<f64>, GeometryError> {
    let (center, radius) = chebyshev_center(poly)?;
    if radius <= 1e-9 {
        return Err(GeometryError::Empty);
    }
    let mut x = center;
    let n = poly.dim();
    for _ in 0..burn_in.max(1) {
        let dir = random_unit_direction(rng, n);
        // Chord of the polytope through x along dir.
        let mut t_lo = f64::NEG_INFINITY;
        let mut t_hi = f64::INFINITY;
        for i in 0..poly.num_rows() {
            let a_dot_d: f64 = poly.matrix().row(i).iter().zip(dir.iter()).map(|(a, d)| a * d).sum();
            let slack = poly.rhs()[i]
                - poly.matrix().row(i).iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>();
            if a_dot_d > 1e-12 {
                t_hi = t_hi.min(slack / a_dot_d);
            } else if a_dot_d < -1e-12 {
                t_lo = t_lo.max(slack / a_dot_d);
            }
        }
        if !t_lo.is_finite() || !t_hi.is_finite() || t_hi < t_lo {
            // Bounded-poly precondition violated or numerical corner; stay put.
            continue;
        }
        // Shrink the chord slightly so the walk stays strictly interior.
        let u: f64 = rng.gen_range(1e-9..1.0 - 1e-9);
        let t = t_lo + u * (t_hi - t_lo);
        x += dir * t;
    }
    Ok(x)
}

fn random_unit_direction<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    loop {
        // Box-Muller pairs give an isotropic Gaussian to normalize.
        let mut d = DVector::zeros(n);
        let mut k = 0;
        while k < n {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            d[k] = r * theta.cos();
            k += 1;
            if k < n {
                d[k] = r * theta.sin();
                k += 1;
            }
        }
        let norm = d.norm();
        if norm > 1e-12 {
            return d / norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_stay_strictly_inside_unit_box() {
        let poly = HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x = hit_and_run_sample(&poly, &mut rng, 20).unwrap();
            assert!(x.amax() < 1.0);
            assert!(poly.contains(&x, 1e-9));
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let poly = HPolytope::from_box(&[0.0, 0.0], &[1.0, 1.0]);
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        let xa = hit_and_run_sample(&poly, &mut a, 100).unwrap();
        let xb = hit_and_run_sample(&poly, &mut b, 100).unwrap();
        assert_eq!(xa, xb);
    }

    #[test]
    fn quadrant_frequencies_are_balanced() {
        // 10,000 samples on [0,1]^2: each 2x2 grid cell gets 15%..35%.
        let poly = HPolytope::from_box(&[0.0, 0.0], &[1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 4];
        let total = 10_000;
        for _ in 0..total {
            let x = hit_and_run_sample(&poly, &mut rng, 30).unwrap();
            let qx = usize::from(x[0] > 0.5);
            let qy = usize::from(x[1] > 0.5);
            counts[2 * qy + qx] += 1;
        }
        for c in counts {
            let frac = c as f64 / total as f64;
            assert!((0.15..=0.35).contains(&frac), "quadrant fraction {frac}");
        }
    }

    #[test]
    fn lower_dimensional_polytope_is_rejected() {
        // x in [0,1], y = 0: no interior.
        let a = nalgebra::DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0],
        );
        let b = nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let poly = HPolytope::new(a, b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            hit_and_run_sample(&poly, &mut rng, 10),
            Err(GeometryError::Empty)
        ));
    }

    #[test]
    fn chebyshev_center_of_box() {
        let poly = HPolytope::from_box(&[0.0, -2.0], &[2.0, 2.0]);
        let (c, r) = chebyshev_center(&poly).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-7);
        assert!((r - 1.0).abs() < 1e-7);
    }

    #[test]
    fn inscribed_box_of_box_is_exact() {
        let poly = HPolytope::from_box(&[-1.0, 0.5], &[3.0, 1.5]);
        let (z, r) = inscribed_box(&poly).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-7 && (z[1] - 1.0).abs() < 1e-7);
        assert!((r[0] - 2.0).abs() < 1e-7 && (r[1] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn inscribed_box_of_singleton_is_point() {
        let poly = HPolytope::from_box(&[0.0, 0.0], &[0.0, 0.0]);
        let (z, r) = inscribed_box(&poly).unwrap();
        assert!(z.amax() < 1e-9);
        assert!(r.amax() < 1e-9);
    }
}
