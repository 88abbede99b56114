//! Batch command implementations behind the `polytree` binary: grow,
//! simulate, coverage, plot, export, validate. Non-interactive; outputs are
//! files plus a short summary on stdout.
//!
//! Exit codes: 0 ok, 2 infeasible core problem, 3 user error, 4 numerical
//! failure.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::control::{simulate, BranchTag, Outcome};
use crate::milp::lp_text::{export_model, ExportFormat};
use crate::scenario::ScenarioConfig;
use crate::traj::{build_model, Anchor, TrajectoryQuery, VolumeObjective};
use crate::tree::{self, IterationOutcome, PolytopicTree};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    InfeasibleCore(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InfeasibleCore(_) => 2,
            CliError::User(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

fn user<E: std::fmt::Display>(e: E) -> CliError {
    CliError::User(e.to_string())
}

#[derive(Clone, Debug, Default)]
pub struct GlobalOpts {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub quiet: bool,
}

impl GlobalOpts {
    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

fn load_scenario(path: &Path, opts: &GlobalOpts) -> Result<ScenarioConfig, CliError> {
    let mut cfg = ScenarioConfig::from_file(path).map_err(user)?;
    if let Some(config_path) = &opts.config {
        let text = std::fs::read_to_string(config_path).map_err(user)?;
        let patch: serde_json::Value = serde_json::from_str(&text).map_err(user)?;
        cfg.override_growth(&patch).map_err(user)?;
    }
    if let Some(seed) = opts.seed {
        cfg.growth.seed = seed;
    }
    Ok(cfg)
}

fn ensure_out_dir(opts: &GlobalOpts) -> Result<(), CliError> {
    std::fs::create_dir_all(&opts.out_dir).map_err(user)
}

/// Grows a tree from a scenario and writes `tree.json` and `stats.csv`.
pub fn cmd_grow(
    scenario: &Path,
    iterations: Option<usize>,
    opts: &GlobalOpts,
) -> Result<PathBuf, CliError> {
    let mut cfg = load_scenario(scenario, opts)?;
    if let Some(it) = iterations {
        cfg.growth.iterations = it;
    }
    ensure_out_dir(opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.growth.seed);
    let system = std::sync::Arc::new(cfg.system.clone());
    let mut tree = tree::init_tree(system, &cfg.growth, &mut rng).map_err(|e| match e {
        tree::TreeError::NoInitialBranch => CliError::InfeasibleCore(e.to_string()),
        other => CliError::Numerical(other.to_string()),
    })?;
    let stats = tree::grow(&mut tree, &cfg.growth, &mut rng)
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    let tree_path = opts.out_dir.join("tree.json");
    let json = tree::save_tree(&tree).map_err(|e| CliError::Numerical(e.to_string()))?;
    std::fs::write(&tree_path, &json).map_err(user)?;

    let stats_path = opts.out_dir.join("stats.csv");
    let mut csv = String::from("iter,outcome,horizon,solve_ms,nodes_total,coverage\n");
    for r in &stats.records {
        let outcome = match &r.outcome {
            IterationOutcome::Accepted { .. } => "accepted",
            IterationOutcome::Infeasible => "infeasible",
            IterationOutcome::Budget => "budget",
            IterationOutcome::VolumeRejected => "volume_rejected",
            IterationOutcome::NoveltyRejected => "novelty_rejected",
            IterationOutcome::SoundnessRejected => "soundness_rejected",
            IterationOutcome::Saturated => "saturated",
        };
        let coverage = r.coverage.map(|c| format!("{c}")).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.iter, outcome, r.horizon, r.solve_ms, r.nodes_total, coverage
        );
    }
    std::fs::write(&stats_path, csv).map_err(user)?;
    opts.say(&format!(
        "grew {} nodes in {} iterations ({} accepted); wrote {} and {}",
        tree.len(),
        stats.records.len(),
        stats.accepted(),
        tree_path.display(),
        stats_path.display()
    ));
    Ok(tree_path)
}

fn load_tree_file(path: &Path) -> Result<PolytopicTree, CliError> {
    let text = std::fs::read_to_string(path).map_err(user)?;
    tree::load_tree(&text).map_err(user)
}

fn parse_vector(text: &str, n: usize) -> Result<DVector<f64>, CliError> {
    let parts: Result<Vec<f64>, _> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect();
    let parts = parts.map_err(|e| CliError::User(format!("cannot parse state vector: {e}")))?;
    if parts.len() != n {
        return Err(CliError::User(format!(
            "state vector has {} entries, expected {n}",
            parts.len()
        )));
    }
    Ok(DVector::from_vec(parts))
}

/// Simulates the closed loop from `x0` and writes a trace CSV.
pub fn cmd_simulate(
    tree_path: &Path,
    x0_text: &str,
    steps: usize,
    out_name: &str,
    opts: &GlobalOpts,
) -> Result<PathBuf, CliError> {
    let tree = load_tree_file(tree_path)?;
    let x0 = parse_vector(x0_text, tree.system.n)?;
    if !tree.system.state_box.contains(&x0, 1e-9) {
        return Err(CliError::User("initial state is outside the state box".into()));
    }
    ensure_out_dir(opts)?;
    let trace = simulate(&tree, &x0, steps).map_err(|e| CliError::Numerical(e.to_string()))?;

    let n = tree.system.n;
    let m = tree.system.m;
    let mut csv = String::from("t");
    for k in 0..n {
        let _ = write!(csv, ",x{k}");
    }
    for l in 0..m {
        let _ = write!(csv, ",u{l}");
    }
    csv.push_str(",branch,node_id,cost\n");
    let mut running = 0.0;
    for (t, x) in trace.states.iter().enumerate() {
        let _ = write!(csv, "{t}");
        for k in 0..n {
            let _ = write!(csv, ",{}", x[k]);
        }
        if t < trace.inputs.len() {
            for l in 0..m {
                let _ = write!(csv, ",{}", trace.inputs[t][l]);
            }
            let (tag, id) = match trace.branch[t] {
                BranchTag::InTree(id) => ("in_tree", id.to_string()),
                BranchTag::OutOfTree => ("out_of_tree", String::new()),
            };
            running += tree.system.stage_cost_eval(
                tree.system
                    .mode_of(x, &trace.inputs[t])
                    .map_err(|e| CliError::Numerical(e.to_string()))?,
                x,
                &trace.inputs[t],
            );
            let _ = writeln!(csv, ",{tag},{id},{running}");
        } else {
            for _ in 0..m {
                csv.push(',');
            }
            let _ = writeln!(csv, ",,,{running}");
        }
    }
    let out_path = opts.out_dir.join(out_name);
    std::fs::write(&out_path, csv).map_err(user)?;
    let outcome = match trace.outcome {
        Outcome::GoalReached(k) => format!("goal reached at step {k}"),
        Outcome::MaxSteps => "max steps reached".into(),
        Outcome::PartitionExit => "left the partition".into(),
    };
    opts.say(&format!(
        "simulated {} steps ({outcome}), cost {:.3}; wrote {}",
        trace.inputs.len(),
        trace.cost,
        out_path.display()
    ));
    Ok(out_path)
}

/// Coverage report: samples states, counts tree membership, optionally
/// cross-checks each in-tree point against the point-MPC oracle.
pub fn cmd_coverage(
    tree_path: &Path,
    samples: usize,
    mpc_horizon_cap: Option<usize>,
    opts: &GlobalOpts,
) -> Result<PathBuf, CliError> {
    let tree = load_tree_file(tree_path)?;
    ensure_out_dir(opts)?;
    let seed = opts.seed.unwrap_or(tree.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("sample_index,in_tree,mpc_horizon\n");
    let mut in_tree_count = 0usize;
    let milp = crate::milp::MilpConfig::default();
    for i in 0..samples {
        let x = crate::geometry::hit_and_run_sample(&tree.system.state_box, &mut rng, 50)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let dists = crate::geometry::batch_distance(
            &x,
            tree.nodes().iter().map(|n| &n.polytope),
            crate::geometry::EPSILON,
        );
        let inside = dists.iter().any(|d| *d <= crate::geometry::MEMBERSHIP_TOL);
        if inside {
            in_tree_count += 1;
        }
        let horizon = match (inside, mpc_horizon_cap) {
            (true, Some(cap)) => {
                crate::control::mpc_feasibility_horizon(&tree.system, &x, cap, &milp)
                    .map(|t| t.to_string())
                    .unwrap_or_default()
            }
            _ => String::new(),
        };
        let _ = writeln!(csv, "{i},{},{horizon}", if inside { 1 } else { 0 });
    }
    let out_path = opts.out_dir.join("coverage.csv");
    std::fs::write(&out_path, csv).map_err(user)?;
    opts.say(&format!(
        "{in_tree_count} of {samples} sampled states are in the tree; wrote {}",
        out_path.display()
    ));
    Ok(out_path)
}

/// Renders one SVG per projection, optionally overlaying a trace CSV.
pub fn cmd_plot(
    tree_path: &Path,
    projections: &[(usize, usize)],
    trace_csv: Option<&Path>,
    opts: &GlobalOpts,
) -> Result<Vec<PathBuf>, CliError> {
    let tree = load_tree_file(tree_path)?;
    let projections: Vec<(usize, usize)> = if projections.is_empty() {
        vec![(0, 1.min(tree.system.n - 1))]
    } else {
        projections.to_vec()
    };
    for &(a, b) in &projections {
        if a >= tree.system.n || b >= tree.system.n {
            return Err(CliError::User(format!(
                "projection ({a},{b}) outside state dimension {}",
                tree.system.n
            )));
        }
    }
    ensure_out_dir(opts)?;
    let trace_states: Option<Vec<Vec<f64>>> = match trace_csv {
        Some(p) => Some(parse_trace_states(p, tree.system.n)?),
        None => None,
    };
    let mut written = Vec::new();
    for &(a, b) in &projections {
        let overlay: Option<Vec<(f64, f64)>> =
            trace_states.as_ref().map(|sts| sts.iter().map(|x| (x[a], x[b])).collect());
        let svg = crate::plot::render_tree_svg(&tree, (a, b), overlay.as_deref());
        let path = opts.out_dir.join(format!("tree_x{a}_x{b}.svg"));
        std::fs::write(&path, svg).map_err(user)?;
        opts.say(&format!("wrote {}", path.display()));
        written.push(path);
    }
    Ok(written)
}

fn parse_trace_states(path: &Path, n: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(user)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 1 + n {
            return Err(CliError::User(format!("trace row {i} has too few columns")));
        }
        let mut x = Vec::with_capacity(n);
        for c in &cols[1..1 + n] {
            x.push(c.parse::<f64>().map_err(|e| CliError::User(format!("trace row {i}: {e}")))?);
        }
        out.push(x);
    }
    Ok(out)
}

/// Dumps the trajectory model for a scenario goal query in LP text format.
pub fn cmd_export(
    scenario: &Path,
    horizon: usize,
    out_name: &str,
    opts: &GlobalOpts,
) -> Result<PathBuf, CliError> {
    let cfg = load_scenario(scenario, opts)?;
    if horizon == 0 {
        return Err(CliError::User("horizon must be at least 1".into()));
    }
    let query = TrajectoryQuery {
        system: &cfg.system,
        horizon,
        anchor: Anchor::Free,
        targets: vec![cfg.system.goal.clone()],
        template: std::sync::Arc::new(crate::geometry::TemplatePolytope::unit_cube(cfg.system.n)),
        objective: VolumeObjective {
            weights: cfg.growth.weights,
            d_min: cfg.growth.d_min,
            rank: None,
        },
        milp: cfg.growth.milp.to_config(),
    };
    let tm = build_model(&query).map_err(user)?;
    let text = export_model(&tm.model, ExportFormat::LpText).map_err(user)?;
    ensure_out_dir(opts)?;
    let out_path = opts.out_dir.join(out_name);
    std::fs::write(&out_path, text).map_err(user)?;
    opts.say(&format!(
        "wrote {} ({} variables, {} rows, {} binaries)",
        out_path.display(),
        tm.model.num_vars(),
        tm.model.num_constrs(),
        tm.model.num_binaries()
    ));
    Ok(out_path)
}

/// Runs the partition validation report for a scenario.
pub fn cmd_validate(scenario: &Path, samples: usize, opts: &GlobalOpts) -> Result<(), CliError> {
    let cfg = load_scenario(scenario, opts)?;
    let seed = opts.seed.unwrap_or(cfg.growth.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = cfg.system.validate_partition(samples, &mut rng);
    println!(
        "partition check on {} samples: coverage {:.4}, overlap defect {:.4}",
        report.samples, report.coverage, report.overlap_defect
    );
    if report.coverage < 1.0 {
        opts.say("warning: the cells do not cover the state-control box");
    }
    Ok(())
}
