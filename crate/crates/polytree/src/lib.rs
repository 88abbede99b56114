//! Feedback controller synthesis for discrete-time piecewise-affine (PWA)
//! systems by growing a tree of polytopic funnels backward from a goal set.
//!
//! The pipeline is:
//!
//! 1. Describe the plant as a [`pwa::PwaSystem`]: a list of affine modes over
//!    a polytopic partition of the state-control space, plus a goal polytope.
//! 2. Solve fixed-horizon mixed-integer programs ([`traj`]) whose solutions
//!    are *polytopic trajectories*: sequences of parallelotopes with per-step
//!    affine feedback, certified to flow into a target set.
//! 3. Grow a [`tree::PolytopicTree`] rooted at the goal by sampling states
//!    outside the current tree and attaching new branches ([`tree::grow`]).
//! 4. Execute the resulting policies in closed loop ([`control`]): inside the
//!    tree the control law is a few matrix products; outside it a small LP
//!    steers the state back toward the tree.
//!
//! All optimization runs on the built-in LP/MILP engine in [`milp`]; no
//! external solver is required. See the `examples/` directory for runnable
//! entry points covering each capability, and the `polytree` binary for the
//! batch workflow (`grow`, `simulate`, `coverage`, `plot`, `export`,
//! `validate`).

pub mod cli;
pub mod control;
pub mod geometry;
pub mod milp;
pub mod plot;
pub mod pwa;
pub mod scenario;
pub mod traj;
pub mod tree;

pub use geometry::{AhPolytope, HPolytope, TemplatePolytope};
pub use milp::{MilpConfig, MilpModel, MilpSolution};
pub use pwa::PwaSystem;
pub use tree::PolytopicTree;
