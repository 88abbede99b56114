//! Grow a polytopic tree for the pendulum-with-wall scenario and print
//! per-iteration progress plus a final coverage estimate.
//!
//! Run with: `cargo run --release --example grow_pendulum`

use polytree::scenario::ScenarioConfig;
use polytree::tree::{self, IterationOutcome};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::sync::Arc;

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/pendulum_wall.json");
    let cfg = ScenarioConfig::from_file(&path).expect("scenario loads");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.growth.seed);
    let started = std::time::Instant::now();
    let system = Arc::new(cfg.system.clone());
    let mut tree = tree::init_tree(system, &cfg.growth, &mut rng).expect("initial branch");
    println!(
        "initialized with {} nodes in {:.2}s",
        tree.len(),
        started.elapsed().as_secs_f64()
    );
    let stats = tree::grow(&mut tree, &cfg.growth, &mut rng).expect("growth");
    for r in &stats.records {
        let tag = match &r.outcome {
            IterationOutcome::Accepted { horizon, nodes_added } => {
                format!("accepted T={horizon} (+{nodes_added} nodes)")
            }
            other => format!("{other:?}"),
        };
        let cov = r.coverage.map(|c| format!("  coverage={c:.3}")).unwrap_or_default();
        println!("iter {:>3}: {:<30} {:>5} ms  nodes={}{}", r.iter, tag, r.solve_ms, r.nodes_total, cov);
    }
    println!(
        "done: {} nodes, {} accepted branches, {:.1}s total",
        tree.len(),
        stats.accepted(),
        started.elapsed().as_secs_f64()
    );
}
