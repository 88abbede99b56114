//! Polytope representations, containment encodings, distance functions,
//! and sampling.
//!
//! Two set representations are used throughout:
//!
//! * [`HPolytope`]: halfspace form `{x | Hx <= h}` for cells, goal sets and
//!   constraint boxes.
//! * [`AhPolytope`]: affine image `{xbar} + G * P` of a template polytope
//!   `P`, the representation of tree-node state sets. With the unit-cube
//!   template and square `G` these are parallelotopes with closed-form
//!   membership and distance.
//!
//! Near-singular `G` matrices are handled by flooring singular values at a
//! fixed `epsilon` (see [`EPSILON`]); the regularized data is cached per
//! polytope after first use.

mod ahpolytope;
mod containment;
mod distance;
mod hpolytope;
mod sampling;
mod template;

pub use ahpolytope::{AhPolytope, NodeVertices};
pub use containment::{
    check_containment, encode_containment, ContainmentCertificate, MatrixExpr,
};
pub use distance::{batch_distance, distance_to_node, lp_distance, point_membership, Norm};
pub use hpolytope::HPolytope;
pub use sampling::{chebyshev_center, hit_and_run_sample, inscribed_box};
pub use template::TemplatePolytope;

use thiserror::Error;

/// Singular-value floor for regularized parallelotope operations.
pub const EPSILON: f64 = 1e-5;
/// Constraint-satisfaction tolerance.
pub const FEAS_TOL: f64 = 1e-7;
/// Membership tolerance in state units: a point belongs to a node when its
/// closed-form distance does not exceed this.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("polytope is unbounded in a queried direction")]
    Unbounded,
    #[error("polytope is empty")]
    Empty,
    #[error("invalid polytope data: {0}")]
    InvalidPolytope(String),
    #[error("optimizer failed: {0}")]
    Solver(String),
}

impl From<crate::milp::LpError> for GeometryError {
    fn from(e: crate::milp::LpError) -> Self {
        GeometryError::Solver(e.to_string())
    }
}

impl From<crate::milp::MilpError> for GeometryError {
    fn from(e: crate::milp::MilpError) -> Self {
        GeometryError::Solver(e.to_string())
    }
}
