//! Random tree growth: sample a state outside the tree, solve a polytopic
//! trajectory into the nearest nodes, and append the branch when it passes
//! the volume, novelty and funnel-soundness criteria.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use super::{NodeId, PolytopicTree, TreeError};
use crate::geometry::{batch_distance, hit_and_run_sample, GeometryError, EPSILON, MEMBERSHIP_TOL};
use crate::scenario::GrowthConfig;
use crate::traj::{
    check_soundness, rank_fallback, solve_trajectory, Anchor, TrajError, TrajectoryQuery,
    VolumeObjective,
};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum IterationOutcome {
    Accepted { horizon: usize, nodes_added: usize },
    Infeasible,
    Budget,
    VolumeRejected,
    NoveltyRejected,
    SoundnessRejected,
    /// Sampling could not find a state outside the tree.
    Saturated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub outcome: IterationOutcome,
    pub horizon: usize,
    pub solve_ms: u64,
    pub nodes_total: usize,
    /// Filled on the configured cadence.
    pub coverage: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GrowthStats {
    pub records: Vec<IterationRecord>,
}

impl GrowthStats {
    pub fn accepted(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.outcome, IterationOutcome::Accepted { .. }))
            .count()
    }
}

/// Hit-and-run sample of the state box, rejected while inside the tree.
/// After `n_reject` failures the farthest-seen sample is returned with the
/// saturation flag set.
pub fn sample_outside<R: Rng>(
    tree: &PolytopicTree,
    rng: &mut R,
    burn_in: usize,
    n_reject: usize,
) -> Result<(DVector<f64>, bool), GeometryError> {
    let mut best: Option<(f64, DVector<f64>)> = None;
    for _ in 0..n_reject.max(1) {
        let x = hit_and_run_sample(&tree.system.state_box, rng, burn_in)?;
        let dists = batch_distance(&x, tree.nodes().iter().map(|n| &n.polytope), EPSILON);
        let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
        if min > MEMBERSHIP_TOL {
            return Ok((x, false));
        }
        match &best {
            Some((bd, _)) if *bd >= min => {}
            _ => best = Some((min, x)),
        }
    }
    let (_, x) = best.expect("at least one sample drawn");
    Ok((x, true))
}

/// The `k` tree nodes nearest to the sample (all nodes while the tree is
/// small), sorted by distance with id tie-breaks.
pub fn select_targets(tree: &PolytopicTree, x_sample: &DVector<f64>, k: usize) -> Vec<NodeId> {
    let dists = batch_distance(x_sample, tree.nodes().iter().map(|n| &n.polytope), EPSILON);
    let mut order: Vec<NodeId> = (0..tree.len()).collect();
    order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    if tree.len() < 4 * k.max(1) {
        return order;
    }
    order.truncate(k.max(1));
    order
}

/// Fraction of state-box samples that belong to the tree.
pub fn coverage_estimate<R: Rng>(
    tree: &PolytopicTree,
    n_samples: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<f64, GeometryError> {
    let n_samples = n_samples.max(1);
    let mut inside = 0usize;
    for _ in 0..n_samples {
        let x = hit_and_run_sample(&tree.system.state_box, rng, burn_in)?;
        let dists = batch_distance(&x, tree.nodes().iter().map(|n| &n.polytope), EPSILON);
        if dists.iter().any(|d| *d <= MEMBERSHIP_TOL) {
            inside += 1;
        }
    }
    Ok(inside as f64 / n_samples as f64)
}

/// Centroid and vertices of the candidate initial set all inside the tree
/// means the branch adds nothing new.
fn is_novel(tree: &PolytopicTree, traj: &crate::traj::PolytopicTrajectory) -> bool {
    let poly = match crate::geometry::AhPolytope::new(
        traj.xbar[0].clone(),
        traj.g[0].clone(),
        tree.template.clone(),
    ) {
        Ok(p) => p,
        Err(_) => return false,
    };
    let mut probes = poly.vertices().points;
    probes.push(traj.xbar[0].clone());
    probes.iter().any(|x| {
        let dists = batch_distance(x, tree.nodes().iter().map(|n| &n.polytope), EPSILON);
        dists.iter().all(|d| *d > MEMBERSHIP_TOL)
    })
}

/// Runs `config.iterations` growth iterations, mutating the tree and
/// appending per-iteration records to its stats. Returns the records added
/// by this call.
pub fn grow<R: Rng>(
    tree: &mut PolytopicTree,
    config: &GrowthConfig,
    rng: &mut R,
) -> Result<GrowthStats, TreeError> {
    let mut stats = GrowthStats::default();
    let system = tree.system.clone();
    let eta_max = system.eta_max().clone();
    let total = config.iterations;
    for iter in 0..total {
        let started = Instant::now();
        let (x_sample, saturated) = sample_outside(tree, rng, config.burn_in, config.n_reject)?;
        if saturated {
            stats.records.push(IterationRecord {
                iter,
                outcome: IterationOutcome::Saturated,
                horizon: 0,
                solve_ms: started.elapsed().as_millis() as u64,
                nodes_total: tree.len(),
                coverage: None,
            });
            break;
        }
        let horizon = rng.gen_range(1..=config.t_max.max(1));
        // Anchor slack: beta ~ U[0, b], with the mean of b annealed toward
        // smaller values as the run progresses.
        let progress = iter as f64 / total.max(1) as f64;
        let mean = config.beta_mean_start + (config.beta_mean_end - config.beta_mean_start) * progress;
        let beta: f64 = rng.gen_range(0.0..=(2.0 * mean).max(f64::MIN_POSITIVE));
        let eta = &eta_max * beta;

        let target_ids = select_targets(tree, &x_sample, config.cluster_size);
        let mut targets = Vec::with_capacity(target_ids.len());
        for &id in &target_ids {
            targets.push(tree.target_hform(id)?);
        }
        let query = TrajectoryQuery {
            system: &system,
            horizon,
            anchor: Anchor::NearPoint { x: x_sample.clone(), eta },
            targets,
            template: tree.template.clone(),
            objective: VolumeObjective {
                weights: config.weights,
                d_min: config.d_min,
                rank: None,
            },
            milp: config.milp.to_config(),
        };
        let solved = match solve_trajectory(&query) {
            Ok(t) => Ok(t),
            Err(TrajError::VolumeRejected(_)) if system.n > 1 => rank_fallback(&query, system.n - 1),
            Err(TrajError::Infeasible) if config.rank_fallback_on_infeasible && system.n > 1 => {
                rank_fallback(&query, system.n - 1)
            }
            Err(e) => Err(e),
        };
        let solve_ms = started.elapsed().as_millis() as u64;
        let outcome = match solved {
            Ok(traj) => {
                if !is_novel(tree, &traj) {
                    IterationOutcome::NoveltyRejected
                } else {
                    let target_hform = tree.target_hform(target_ids[traj.landing])?;
                    let report = check_soundness(
                        &system,
                        &traj,
                        &tree.template,
                        &target_hform,
                        config.soundness_samples,
                        rng,
                    );
                    if !report.ok {
                        IterationOutcome::SoundnessRejected
                    } else {
                        let ids = tree.append_branch(&traj, target_ids[traj.landing], iter)?;
                        IterationOutcome::Accepted { horizon, nodes_added: ids.len() }
                    }
                }
            }
            Err(TrajError::Infeasible) => IterationOutcome::Infeasible,
            Err(TrajError::VolumeRejected(_)) => IterationOutcome::VolumeRejected,
            Err(TrajError::Budget(_)) => IterationOutcome::Budget,
            Err(e) => return Err(e.into()),
        };
        let coverage = if config.coverage_every > 0
            && (iter % config.coverage_every == config.coverage_every - 1 || iter + 1 == total)
        {
            Some(coverage_estimate(tree, config.coverage_samples, config.burn_in, rng)?)
        } else {
            None
        };
        stats.records.push(IterationRecord {
            iter,
            outcome,
            horizon,
            solve_ms,
            nodes_total: tree.len(),
            coverage,
        });
    }
    tree.stats.records.extend(stats.records.iter().cloned());
    Ok(stats)
}
