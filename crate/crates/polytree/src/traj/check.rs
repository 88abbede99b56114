//! Sampled closed-loop validation of a solved trajectory: every point of
//! every step set, driven by the stored feedback, must stay in the active
//! cell and land in the next set.

use nalgebra::DVector;
use rand::Rng;
use std::sync::Arc;

use super::PolytopicTrajectory;
use crate::geometry::{distance_to_node, AhPolytope, TemplatePolytope, EPSILON};
use crate::pwa::PwaSystem;

pub const SOUNDNESS_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct SoundnessReport {
    pub ok: bool,
    /// Most negative cell margin seen (nonnegative margins are clamped to 0).
    pub worst_cell_violation: f64,
    /// Largest next-set / target distance seen.
    pub worst_landing_defect: f64,
    pub samples_checked: usize,
}

/// Samples `n_samples` template points per step (plus all template-cube
/// vertices when small) and checks the flow conditions at [`SOUNDNESS_TOL`].
pub fn check_soundness<R: Rng>(
    system: &PwaSystem,
    traj: &PolytopicTrajectory,
    template: &Arc<TemplatePolytope>,
    target: &crate::geometry::HPolytope,
    n_samples: usize,
    rng: &mut R,
) -> SoundnessReport {
    let n_p = template.dim();
    let horizon = traj.horizon();
    let mut worst_cell: f64 = 0.0;
    let mut worst_landing: f64 = 0.0;
    let mut checked = 0usize;

    // Next-set membership is evaluated against the regularized sets.
    let next_sets: Vec<AhPolytope> = (1..=horizon)
        .map(|tau| {
            AhPolytope::new(traj.xbar[tau].clone(), traj.g[tau].clone(), template.clone())
                .expect("trajectory dimensions are consistent")
        })
        .collect();

    let mut points: Vec<DVector<f64>> = Vec::new();
    if n_p <= 12 {
        for mask in 0..(1usize << n_p) {
            points.push(DVector::from_fn(n_p, |k, _| {
                if mask >> k & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }));
        }
    }
    let fixed = points.len();

    for tau in 0..horizon {
        let mode = traj.modes[tau];
        let cell = &system.modes[mode].cell;
        points.truncate(fixed);
        for _ in 0..n_samples {
            points.push(DVector::from_fn(n_p, |_, _| rng.gen_range(-1.0..=1.0)));
        }
        for p in &points {
            let x = &traj.xbar[tau] + &traj.g[tau] * p;
            let u = &traj.ubar[tau] + &traj.theta[tau] * p;
            let mut xu = DVector::zeros(x.len() + u.len());
            xu.rows_mut(0, x.len()).copy_from(&x);
            xu.rows_mut(x.len(), u.len()).copy_from(&u);
            let margin = cell.margin(&xu);
            if margin < 0.0 {
                worst_cell = worst_cell.max(-margin);
            }
            let next = system.step_in_mode(mode, &x, &u);
            let d = distance_to_node(&next, &next_sets[tau], EPSILON);
            worst_landing = worst_landing.max(d);
            checked += 1;
        }
    }
    // Terminal set points must lie in the certified target.
    points.truncate(fixed);
    for _ in 0..n_samples {
        points.push(DVector::from_fn(n_p, |_, _| rng.gen_range(-1.0..=1.0)));
    }
    for p in &points {
        let x = &traj.xbar[horizon] + &traj.g[horizon] * p;
        let margin = target.margin(&x);
        if margin < 0.0 {
            worst_landing = worst_landing.max(-margin);
        }
        checked += 1;
    }

    SoundnessReport {
        ok: worst_cell <= SOUNDNESS_TOL && worst_landing <= SOUNDNESS_TOL,
        worst_cell_violation: worst_cell,
        worst_landing_defect: worst_landing,
        samples_checked: checked,
    }
}
