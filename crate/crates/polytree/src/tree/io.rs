//! Tree file format: a self-contained JSON document embedding the system,
//! all nodes, the growth seed and per-iteration statistics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::{node_cost, Feedback, GrowthStats, PolytopicTree, TreeError, TreeNode};
use crate::geometry::AhPolytope;
use crate::geometry::TemplatePolytope;
use crate::pwa::PwaSystem;

const SCHEMA_VERSION: u32 = 1;
const VALUE_TOL: f64 = 1e-9;

#[derive(Serialize, Deserialize)]
struct NodeWire {
    id: usize,
    polytope: AhPolytope,
    #[serde(skip_serializing_if = "Option::is_none")]
    ubar: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    child: Option<usize>,
    cost: f64,
    value: f64,
    created_iter: usize,
}

#[derive(Serialize, Deserialize)]
struct TreeWire {
    schema_version: u32,
    seed: u64,
    system: PwaSystem,
    nodes: Vec<NodeWire>,
    stats: GrowthStats,
}

/// Serializes the tree to pretty JSON. Byte-identical for identical trees.
pub fn save_tree(tree: &PolytopicTree) -> Result<String, TreeError> {
    let nodes = tree
        .nodes()
        .iter()
        .map(|n| NodeWire {
            id: n.id,
            polytope: n.polytope.clone(),
            ubar: n.feedback.as_ref().map(|f| f.ubar.iter().copied().collect()),
            theta: n.feedback.as_ref().map(|f| {
                (0..f.theta.nrows())
                    .map(|r| f.theta.row(r).iter().copied().collect())
                    .collect()
            }),
            mode: n.mode,
            child: n.child,
            cost: n.cost,
            value: n.value,
            created_iter: n.created_iter,
        })
        .collect();
    let wire = TreeWire {
        schema_version: SCHEMA_VERSION,
        seed: tree.seed,
        system: tree.system.as_ref().clone(),
        nodes,
        stats: tree.stats.clone(),
    };
    serde_json::to_string_pretty(&wire).map_err(|e| TreeError::CorruptFile(e.to_string()))
}

/// Parses and fully validates a tree file: structure, acyclicity, and the
/// stored cost/value bookkeeping (recomputed values must match to 1e-9).
pub fn load_tree(text: &str) -> Result<PolytopicTree, TreeError> {
    let wire: TreeWire =
        serde_json::from_str(text).map_err(|e| TreeError::CorruptFile(e.to_string()))?;
    if wire.schema_version != SCHEMA_VERSION {
        return Err(TreeError::CorruptFile(format!(
            "unsupported schema version {}",
            wire.schema_version
        )));
    }
    if wire.nodes.is_empty() {
        return Err(TreeError::CorruptFile("tree has no nodes; a root is mandatory".into()));
    }
    let system = Arc::new(wire.system);
    let template = Arc::new(TemplatePolytope::unit_cube(system.n));
    let mut nodes = Vec::with_capacity(wire.nodes.len());
    for (idx, nw) in wire.nodes.into_iter().enumerate() {
        if nw.id != idx {
            return Err(TreeError::CorruptFile(format!(
                "node at position {idx} has id {}; ids must be dense and ordered",
                nw.id
            )));
        }
        let feedback = match (nw.ubar, nw.theta) {
            (Some(u), Some(t)) => {
                let nr = t.len();
                let nc = t.first().map_or(0, |r| r.len());
                Some(Feedback {
                    ubar: DVector::from_vec(u),
                    theta: DMatrix::from_row_iterator(nr, nc, t.into_iter().flatten()),
                })
            }
            (None, None) => None,
            _ => {
                return Err(TreeError::CorruptFile(format!(
                    "node {idx}: feedback must provide both ubar and theta"
                )))
            }
        };
        if idx == 0 {
            if feedback.is_some() || nw.child.is_some() || nw.mode.is_some() {
                return Err(TreeError::CorruptFile(
                    "root must have no feedback, mode, or child".into(),
                ));
            }
            if nw.value.abs() > VALUE_TOL || nw.cost.abs() > VALUE_TOL {
                return Err(TreeError::CorruptFile("root cost and value must be zero".into()));
            }
        } else if feedback.is_none() || nw.child.is_none() || nw.mode.is_none() {
            return Err(TreeError::CorruptFile(format!(
                "node {idx}: non-root nodes need feedback, mode, and child"
            )));
        }
        if let Some(mode) = nw.mode {
            if mode >= system.modes.len() {
                return Err(TreeError::CorruptFile(format!("node {idx}: mode {mode} out of range")));
            }
        }
        nodes.push(TreeNode {
            id: idx,
            polytope: nw.polytope,
            feedback,
            mode: nw.mode,
            child: nw.child,
            cost: nw.cost,
            value: nw.value,
            created_iter: nw.created_iter,
        });
    }
    let tree = PolytopicTree {
        system: system.clone(),
        template,
        nodes,
        seed: wire.seed,
        stats: wire.stats,
    };
    tree.verify_structure()?;
    // Recompute the bookkeeping: cost from the stage cost, value by the
    // recursion down the child chain.
    for node in tree.nodes() {
        if node.is_root() {
            continue;
        }
        let fb = node.feedback.as_ref().unwrap();
        let expect_cost = node_cost(
            &system.modes[node.mode.unwrap()].cost,
            node.polytope.center(),
            node.polytope.map(),
            &fb.ubar,
            &fb.theta,
        );
        if (expect_cost - node.cost).abs() > VALUE_TOL {
            return Err(TreeError::CorruptFile(format!(
                "node {}: stored cost {} but recomputed {}",
                node.id, node.cost, expect_cost
            )));
        }
        let child_value = tree.node(node.child.unwrap()).value;
        if (node.cost + child_value - node.value).abs() > VALUE_TOL {
            return Err(TreeError::CorruptFile(format!(
                "node {}: value {} breaks the recursion (cost {} + child value {})",
                node.id, node.value, node.cost, child_value
            )));
        }
    }
    Ok(tree)
}
