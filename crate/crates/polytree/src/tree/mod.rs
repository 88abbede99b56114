//! The polytopic tree: nodes are parallelotopes with affine feedback laws,
//! each certified to flow into its child in one step; the root is the goal.

mod grow;
mod io;

pub use grow::{coverage_estimate, grow, sample_outside, select_targets, GrowthStats, IterationOutcome, IterationRecord};
pub use io::{load_tree, save_tree};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::sync::Arc;
use thiserror::Error;

use crate::geometry::{inscribed_box, AhPolytope, HPolytope, TemplatePolytope, EPSILON};
use crate::pwa::{PwaSystem, StageCost};
use crate::scenario::GrowthConfig;
use crate::traj::{solve_trajectory, Anchor, PolytopicTrajectory, TrajectoryQuery, VolumeObjective};

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("no initial branch: the goal admits no polytopic trajectory up to the horizon cap")]
    NoInitialBranch,
    #[error("corrupt tree file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Traj(#[from] crate::traj::TrajError),
}

/// Affine feedback `u(x) = ubar + theta * p_v(x)` attached to a node.
#[derive(Clone, Debug)]
pub struct Feedback {
    pub ubar: DVector<f64>,
    pub theta: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct TreeNode {
    pub id: NodeId,
    pub polytope: AhPolytope,
    /// `None` only for the root.
    pub feedback: Option<Feedback>,
    pub mode: Option<usize>,
    pub child: Option<NodeId>,
    /// Worst-case stage cost of the hop to the child.
    pub cost: f64,
    /// Cost-to-go: `cost + value(child)`, zero at the root.
    pub value: f64,
    pub created_iter: usize,
}

impl TreeNode {
    pub fn is_root(&self) -> bool {
        self.child.is_none()
    }
}

/// Rooted tree of polytopes over one PWA system.
#[derive(Clone, Debug)]
pub struct PolytopicTree {
    pub system: Arc<PwaSystem>,
    pub template: Arc<TemplatePolytope>,
    nodes: Vec<TreeNode>,
    pub seed: u64,
    pub stats: GrowthStats,
}

impl PolytopicTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    /// Terminal-containment H-form of a node: the original goal polytope for
    /// the root, the regularized parallelotope for everything else.
    pub fn target_hform(&self, id: NodeId) -> Result<HPolytope, TreeError> {
        if id == 0 {
            Ok(self.system.goal.clone())
        } else {
            Ok(self.nodes[id].polytope.hform_eps(EPSILON)?)
        }
    }

    /// Appends a solved branch; the last new node's child is `landing`.
    /// Returns the new node ids, outermost (step 0) first.
    pub fn append_branch(
        &mut self,
        traj: &PolytopicTrajectory,
        landing: NodeId,
        created_iter: usize,
    ) -> Result<Vec<NodeId>, TreeError> {
        let horizon = traj.horizon();
        let base = self.nodes.len();
        let landing_value = self.nodes[landing].value;
        // Per-step worst-case costs, then suffix sums for the values.
        let mut costs = Vec::with_capacity(horizon);
        for tau in 0..horizon {
            costs.push(node_cost(
                &self.system.modes[traj.modes[tau]].cost,
                &traj.xbar[tau],
                &traj.g[tau],
                &traj.ubar[tau],
                &traj.theta[tau],
            ));
        }
        let mut suffix = vec![0.0; horizon + 1];
        for tau in (0..horizon).rev() {
            suffix[tau] = suffix[tau + 1] + costs[tau];
        }
        let mut ids = Vec::with_capacity(horizon);
        for tau in 0..horizon {
            let id = base + tau;
            let child = if tau + 1 < horizon { base + tau + 1 } else { landing };
            let polytope = AhPolytope::new(
                traj.xbar[tau].clone(),
                traj.g[tau].clone(),
                self.template.clone(),
            )?;
            self.nodes.push(TreeNode {
                id,
                polytope,
                feedback: Some(Feedback { ubar: traj.ubar[tau].clone(), theta: traj.theta[tau].clone() }),
                mode: Some(traj.modes[tau]),
                child: Some(child),
                cost: costs[tau],
                value: suffix[tau] + landing_value,
                created_iter,
            });
            ids.push(id);
        }
        Ok(ids)
    }

    /// Checks acyclicity and root reachability following child pointers.
    pub fn verify_structure(&self) -> Result<(), TreeError> {
        if self.nodes.is_empty() {
            return Err(TreeError::CorruptFile("tree has no root".into()));
        }
        if !self.nodes[0].is_root() {
            return Err(TreeError::CorruptFile("node 0 must be the root".into()));
        }
        for node in &self.nodes {
            let mut hops = 0usize;
            let mut cur = node.id;
            while let Some(next) = self.nodes[cur].child {
                if next >= self.nodes.len() {
                    return Err(TreeError::CorruptFile(format!(
                        "node {cur}: child {next} out of range"
                    )));
                }
                cur = next;
                hops += 1;
                if hops > self.nodes.len() {
                    return Err(TreeError::CorruptFile(format!(
                        "node {}: child chain does not reach the root (cycle)",
                        node.id
                    )));
                }
            }
            if cur != 0 {
                return Err(TreeError::CorruptFile(format!(
                    "node {}: chain ends at non-root {cur}",
                    node.id
                )));
            }
        }
        Ok(())
    }
}

/// Worst-case stage cost over a node: `max_{p in P} cost(xbar + G p, ubar + theta p)`.
/// Closed form for the unit-cube template; exactly `w` for constant costs.
pub fn node_cost(
    cost: &StageCost,
    xbar: &DVector<f64>,
    g: &DMatrix<f64>,
    ubar: &DVector<f64>,
    theta: &DMatrix<f64>,
) -> f64 {
    match cost {
        StageCost::Constant { w } => *w,
        StageCost::Affine { a_x, a_u, b } => {
            let ax = DVector::from_column_slice(a_x);
            let au = DVector::from_column_slice(a_u);
            let center = b + ax.dot(xbar) + au.dot(ubar);
            // max over the unit cube of (G' a_x + theta' a_u) . p = l1 norm.
            let coeff = g.transpose() * &ax + theta.transpose() * &au;
            center + coeff.iter().map(|v| v.abs()).sum::<f64>()
        }
    }
}

/// Builds the root from the goal and solves one unconstrained-anchor query,
/// trying horizons `1..=t_max` in order.
pub fn init_tree<R: Rng>(
    system: Arc<PwaSystem>,
    config: &GrowthConfig,
    rng: &mut R,
) -> Result<PolytopicTree, TreeError> {
    let template = Arc::new(TemplatePolytope::unit_cube(system.n));
    // Root set: the goal, converted to AH form through its largest inscribed
    // axis-aligned box. The original H-form stays in use for containment.
    let (center, radii) = inscribed_box(&system.goal)?;
    let root_poly = AhPolytope::new(center, DMatrix::from_diagonal(&radii), template.clone())?;
    let mut tree = PolytopicTree {
        system: system.clone(),
        template: template.clone(),
        nodes: vec![TreeNode {
            id: 0,
            polytope: root_poly,
            feedback: None,
            mode: None,
            child: None,
            cost: 0.0,
            value: 0.0,
            created_iter: 0,
        }],
        seed: config.seed,
        stats: GrowthStats::default(),
    };
    for horizon in 1..=config.t_max.max(1) {
        let query = TrajectoryQuery {
            system: &system,
            horizon,
            anchor: Anchor::Free,
            targets: vec![system.goal.clone()],
            template: template.clone(),
            objective: VolumeObjective {
                weights: config.weights,
                d_min: config.d_min,
                rank: None,
            },
            milp: config.milp.to_config(),
        };
        match solve_trajectory(&query) {
            Ok(traj) => {
                let report = crate::traj::check_soundness(
                    &system,
                    &traj,
                    &template,
                    &system.goal,
                    config.soundness_samples,
                    rng,
                );
                if !report.ok {
                    continue;
                }
                tree.append_branch(&traj, 0, 0)?;
                return Ok(tree);
            }
            Err(_) => continue,
        }
    }
    Err(TreeError::NoInitialBranch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_node_cost_closed_form() {
        // a_x = (1,0), xbar = 0, G = I: max of p_1 over the square is 1.
        let cost = StageCost::Affine { a_x: vec![1.0, 0.0], a_u: vec![0.0], b: 0.0 };
        let xbar = DVector::zeros(2);
        let g = DMatrix::identity(2, 2);
        let ubar = DVector::zeros(1);
        let theta = DMatrix::zeros(1, 2);
        assert_eq!(node_cost(&cost, &xbar, &g, &ubar, &theta), 1.0);
    }

    #[test]
    fn constant_cost_passthrough() {
        let cost = StageCost::Constant { w: 1.0 };
        let xbar = DVector::zeros(2);
        let g = DMatrix::identity(2, 2);
        let ubar = DVector::zeros(1);
        let theta = DMatrix::zeros(1, 2);
        assert_eq!(node_cost(&cost, &xbar, &g, &ubar, &theta), 1.0);
        let zero = StageCost::Constant { w: 0.0 };
        assert_eq!(node_cost(&zero, &xbar, &g, &ubar, &theta), 0.0);
    }

    #[test]
    fn affine_cost_matches_lp_oracle() {
        use crate::milp::{self, LinExpr, MilpModel};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let a_x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a_u: Vec<f64> = vec![rng.gen_range(-2.0..2.0)];
            let b = rng.gen_range(-1.0..1.0);
            let xbar = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let g = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
            let ubar = DVector::from_fn(1, |_, _| rng.gen_range(-1.0..1.0));
            let theta = DMatrix::from_fn(1, 2, |_, _| rng.gen_range(-1.0..1.0));
            let closed = node_cost(
                &StageCost::Affine { a_x: a_x.clone(), a_u: a_u.clone(), b },
                &xbar,
                &g,
                &ubar,
                &theta,
            );
            // LP oracle: maximize the affine cost over p in [-1,1]^2.
            let mut model = MilpModel::new();
            let p = model.add_matrix(2, 1, -1.0, 1.0).unwrap();
            let mut obj = LinExpr::new();
            for k in 0..2 {
                let coef: f64 = (0..2).map(|r| g[(r, k)] * a_x[r]).sum::<f64>()
                    + theta[(0, k)] * a_u[0];
                obj.add_term(p.at(k, 0), -coef);
            }
            model.set_objective(obj).unwrap();
            let sol = milp::solve_lp(&mut model).unwrap();
            let base = b
                + a_x.iter().zip(xbar.iter()).map(|(a, v)| a * v).sum::<f64>()
                + a_u[0] * ubar[0];
            let lp = base - sol.objective;
            assert!((closed - lp).abs() < 1e-7, "closed {closed} vs lp {lp}");
        }
    }
}
