//! Timing probe for single trajectory solves at increasing horizons.

use polytree::scenario::ScenarioConfig;
use polytree::traj::{build_model, solve_trajectory, Anchor, TrajectoryQuery};
use std::path::PathBuf;

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/pendulum_wall.json");
    let cfg = ScenarioConfig::from_file(&path).expect("scenario loads");
    for horizon in [1usize, 2, 3, 5, 8, 10] {
        let query =
            TrajectoryQuery::new(&cfg.system, horizon, Anchor::Free, vec![cfg.system.goal.clone()]);
        let tm = build_model(&query).unwrap();
        let (nv, nc, nb) = (tm.model.num_vars(), tm.model.num_constrs(), tm.model.num_binaries());
        let t0 = std::time::Instant::now();
        let res = solve_trajectory(&query);
        let dt = t0.elapsed().as_secs_f64();
        match res {
            Ok(t) => println!(
                "T={horizon:>2}: {nv:>4} vars {nc:>4} rows {nb:>2} bins  {dt:>8.2}s  obj={:.4} vol={:.2e}",
                t.objective,
                t.initial_volume()
            ),
            Err(e) => println!("T={horizon:>2}: {nv:>4} vars {nc:>4} rows {nb:>2} bins  {dt:>8.2}s  {e}"),
        }
    }
}
