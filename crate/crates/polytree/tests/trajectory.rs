//! Integration tests for polytopic trajectory synthesis.

mod common;

use nalgebra::DVector;
use polytree::geometry::TemplatePolytope;
use polytree::traj::{
    build_model, check_soundness, rank_fallback, solve_trajectory, Anchor, TrajError,
    TrajectoryQuery, VolumeObjective, VolumeWeights,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[test]
fn scalar_maximal_initial_interval() {
    // x' = x + u, |u| <= 1, target [-0.5, 0.5], T = 1: the largest interval
    // that one feedback step maps into the target has half-width 1.5
    // (theta = -1 cancels the set, the input span adds 0.5 on each side).
    let sys = common::scalar_integrator(-0.5, 0.5);
    let mut query = TrajectoryQuery::new(&sys, 1, Anchor::Free, vec![sys.goal.clone()]);
    query.objective.weights = VolumeWeights { trace: 1.0, l1: 0.0, linf: 0.0, step_trace: 0.0 };
    let traj = solve_trajectory(&query).expect("feasible");
    assert!(
        (traj.g[0][(0, 0)] - 1.5).abs() < 1e-6,
        "maximal interval half-width {}, expected 1.5",
        traj.g[0][(0, 0)]
    );
    assert_eq!(traj.horizon(), 1);
    assert_eq!(traj.landing, 0);
}

#[test]
fn double_integrator_flow_is_sound() {
    let sys = common::double_integrator();
    let query = TrajectoryQuery::new(&sys, 3, Anchor::Free, vec![sys.goal.clone()]);
    let traj = solve_trajectory(&query).expect("feasible");
    assert!(traj.initial_volume() >= 1e-6);
    // 1,000-point closed-loop sampling per step.
    let template = Arc::new(TemplatePolytope::unit_cube(2));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let report = check_soundness(&sys, &traj, &template, &sys.goal, 1000, &mut rng);
    assert!(
        report.ok,
        "cell violation {:.3e}, landing defect {:.3e}",
        report.worst_cell_violation, report.worst_landing_defect
    );
    // Evolution invariant holds tightly.
    assert!(traj.evolution_residual(&sys) <= 1e-6);
}

#[test]
fn pendulum_model_has_ten_binaries_at_horizon_five() {
    let cfg = common::load_scenario("pendulum_wall.json");
    let query = TrajectoryQuery::new(&cfg.system, 5, Anchor::Free, vec![cfg.system.goal.clone()]);
    let tm = build_model(&query).expect("builds");
    assert_eq!(tm.model.num_binaries(), 10);
    assert_eq!(tm.mode_binaries().len(), 5);
}

#[test]
fn zero_horizon_rejected() {
    let sys = common::double_integrator();
    let query = TrajectoryQuery::new(&sys, 0, Anchor::Free, vec![sys.goal.clone()]);
    assert!(matches!(build_model(&query), Err(TrajError::InvalidQuery(_))));
}

#[test]
fn empty_targets_rejected() {
    let sys = common::double_integrator();
    let query = TrajectoryQuery::new(&sys, 2, Anchor::Free, vec![]);
    assert!(matches!(build_model(&query), Err(TrajError::EmptyTargets)));
}

#[test]
fn unreachable_anchor_is_infeasible() {
    // One step cannot bring x = 4 into [-0.2, 0.2] with |u| <= 1.
    let sys = common::scalar_integrator(-0.2, 0.2);
    let query = TrajectoryQuery::new(
        &sys,
        1,
        Anchor::NearPoint { x: DVector::from_vec(vec![4.0]), eta: DVector::zeros(1) },
        vec![sys.goal.clone()],
    );
    assert!(matches!(solve_trajectory(&query), Err(TrajError::Infeasible)));
}

#[test]
fn line_confined_system_needs_rank_fallback() {
    // The second coordinate is uncontrollable and the goal is a singleton,
    // so a full-dimensional initial set is impossible; rank 1 succeeds.
    let sys = common::line_confined();
    let query = TrajectoryQuery::new(
        &sys,
        2,
        Anchor::NearPoint { x: DVector::from_vec(vec![0.5, 0.0]), eta: DVector::zeros(2) },
        vec![sys.goal.clone()],
    );
    let full = solve_trajectory(&query);
    assert!(matches!(full, Err(TrajError::Infeasible)), "full rank should fail: {full:?}");
    let reduced = rank_fallback(&query, 1).expect("rank-1 feasible");
    // The surviving direction keeps a nonzero extent.
    assert!(reduced.g[0][(0, 0)].abs() >= 1e-3);
    assert!(reduced.g[0][(1, 1)].abs() < 1e-9);
}

#[test]
fn rank_fallback_rejects_bad_rank() {
    let sys = common::line_confined();
    let query = TrajectoryQuery::new(&sys, 2, Anchor::Free, vec![sys.goal.clone()]);
    assert!(matches!(rank_fallback(&query, 2), Err(TrajError::InvalidQuery(_))));
    assert!(matches!(rank_fallback(&query, 0), Err(TrajError::InvalidQuery(_))));
}

#[test]
fn singleton_solution_matches_point_mpc_feasibility() {
    // With zero volume pressure the polytopic model is feasible exactly when
    // the open-loop point program is, over a grid of anchors.
    let sys = common::double_integrator();
    let milp = polytree::milp::MilpConfig::default();
    let mut checked = 0;
    for (i, xv) in [-1.8, -1.2, -0.6, 0.0, 0.6, 1.2, 1.8].iter().enumerate() {
        for (j, vv) in [-1.5, 0.0, 1.5].iter().enumerate() {
            let x = DVector::from_vec(vec![*xv, *vv]);
            let horizon = 2 + (i + j) % 4;
            let mut query = TrajectoryQuery::new(
                &sys,
                horizon,
                Anchor::NearPoint { x: x.clone(), eta: DVector::zeros(2) },
                vec![sys.goal.clone()],
            );
            query.objective = VolumeObjective {
                weights: VolumeWeights { trace: 0.0, l1: 0.0, linf: 0.0, step_trace: 0.0 },
                d_min: 0.0,
                rank: None,
            };
            let poly_feasible = solve_trajectory(&query).is_ok();
            let mpc_feasible = polytree::control::point_mpc(&sys, &x, horizon, &milp).is_ok();
            assert_eq!(
                poly_feasible, mpc_feasible,
                "anchor {x:?} horizon {horizon}: polytopic {poly_feasible} vs point {mpc_feasible}"
            );
            checked += 1;
        }
    }
    assert!(checked >= 21);
}

#[test]
fn pendulum_short_horizon_solves() {
    let cfg = common::load_scenario("pendulum_wall.json");
    for horizon in 1..=3 {
        let query =
            TrajectoryQuery::new(&cfg.system, horizon, Anchor::Free, vec![cfg.system.goal.clone()]);
        match solve_trajectory(&query) {
            Ok(traj) => {
                let template = Arc::new(TemplatePolytope::unit_cube(2));
                let mut rng = ChaCha8Rng::seed_from_u64(5);
                let report =
                    check_soundness(&cfg.system, &traj, &template, &cfg.system.goal, 500, &mut rng);
                assert!(
                    report.ok,
                    "horizon {horizon}: cell violation {:.3e}, landing defect {:.3e}",
                    report.worst_cell_violation, report.worst_landing_defect
                );
                return;
            }
            Err(TrajError::Infeasible) | Err(TrajError::VolumeRejected(_)) => continue,
            Err(e) => panic!("unexpected error: {e}"),
        }
    }
    panic!("no feasible horizon up to 3");
}
