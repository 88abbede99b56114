//! Branch-and-bound statistics for one pendulum trajectory model.

use polytree::milp::{solve_milp, MilpConfig};
use polytree::scenario::ScenarioConfig;
use polytree::traj::{build_model, Anchor, TrajectoryQuery};
use std::path::PathBuf;

fn main() {
    let horizon: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(5);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/pendulum_wall.json");
    let cfg = ScenarioConfig::from_file(&path).expect("scenario loads");
    let query =
        TrajectoryQuery::new(&cfg.system, horizon, Anchor::Free, vec![cfg.system.goal.clone()]);
    let mut tm = build_model(&query).unwrap();
    let t0 = std::time::Instant::now();
    match solve_milp(&mut tm.model, &MilpConfig::default()) {
        Ok(sol) => println!(
            "T={horizon}: {:.2}s  nodes={} lp_iters={} obj={:.5} gap={:.2e}",
            t0.elapsed().as_secs_f64(),
            sol.stats.nodes,
            sol.stats.lp_iterations,
            sol.objective,
            sol.gap
        ),
        Err(e) => println!("T={horizon}: {:.2}s  {e}", t0.elapsed().as_secs_f64()),
    }
}
