//! Shared fixtures for integration tests.

use nalgebra::{DMatrix, DVector};
use polytree::geometry::HPolytope;
use polytree::pwa::{Mode, PwaSystem, StageCost};
use std::path::PathBuf;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn load_scenario(name: &str) -> polytree::scenario::ScenarioConfig {
    polytree::scenario::ScenarioConfig::from_file(&scenario_path(name)).expect("scenario loads")
}

/// Single-mode double integrator: x = (position, velocity), dt = 0.1.
pub fn double_integrator() -> PwaSystem {
    let dt = 0.1;
    let state_box = HPolytope::from_box(&[-2.0, -2.0], &[2.0, 2.0]);
    let input_box = HPolytope::from_box(&[-1.0], &[1.0]);
    let goal = HPolytope::from_box(&[-0.2, -0.2], &[0.2, 0.2]);
    let cell = state_box.product(&input_box);
    let modes = vec![Mode {
        a: DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
        b: DMatrix::from_row_slice(2, 1, &[0.5 * dt * dt, dt]),
        c: DVector::zeros(2),
        cell,
        cost: StageCost::Constant { w: 1.0 },
    }];
    PwaSystem::new("double_integrator".into(), modes, state_box, input_box, goal).unwrap()
}

/// Scalar system x' = x + u, |u| <= 1, over x in [-5, 5].
pub fn scalar_integrator(target_lo: f64, target_hi: f64) -> PwaSystem {
    let state_box = HPolytope::from_box(&[-5.0], &[5.0]);
    let input_box = HPolytope::from_box(&[-1.0], &[1.0]);
    let goal = HPolytope::from_box(&[target_lo], &[target_hi]);
    let cell = state_box.product(&input_box);
    let modes = vec![Mode {
        a: DMatrix::from_row_slice(1, 1, &[1.0]),
        b: DMatrix::from_row_slice(1, 1, &[1.0]),
        c: DVector::zeros(1),
        cell,
        cost: StageCost::Constant { w: 1.0 },
    }];
    PwaSystem::new("scalar".into(), modes, state_box, input_box, goal).unwrap()
}

/// Dynamics that cannot leave the x2 = const line: A = I, B moves x1 only.
/// With a singleton goal this force-collapses the reachable set to a line.
pub fn line_confined() -> PwaSystem {
    let state_box = HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]);
    let input_box = HPolytope::from_box(&[-1.0], &[1.0]);
    let goal = HPolytope::from_box(&[0.0, 0.0], &[0.0, 0.0]);
    let cell = state_box.product(&input_box);
    let modes = vec![Mode {
        a: DMatrix::identity(2, 2),
        b: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        c: DVector::zeros(2),
        cell,
        cost: StageCost::Constant { w: 1.0 },
    }];
    PwaSystem::new("line".into(), modes, state_box, input_box, goal).unwrap()
}
