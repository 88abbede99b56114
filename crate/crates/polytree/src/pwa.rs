//! Discrete-time piecewise-affine systems: definition, validation, and
//! pointwise simulation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

use crate::geometry::{GeometryError, HPolytope};
use crate::milp::{self, LinExpr, LpError, MilpModel};

pub const CELL_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum PwaError {
    #[error("no cell contains the given state-control pair")]
    OutOfPartition,
    #[error("invalid system: {0}")]
    Invalid(String),
}

impl From<GeometryError> for PwaError {
    fn from(e: GeometryError) -> Self {
        PwaError::Invalid(e.to_string())
    }
}

/// Per-mode stage cost, restricted to forms that keep worst-case node costs
/// linear programs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StageCost {
    Constant {
        w: f64,
    },
    Affine {
        a_x: Vec<f64>,
        a_u: Vec<f64>,
        b: f64,
    },
}

impl StageCost {
    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        match self {
            StageCost::Constant { w } => *w,
            StageCost::Affine { a_x, a_u, b } => {
                let sx: f64 = a_x.iter().zip(x.iter()).map(|(a, v)| a * v).sum();
                let su: f64 = a_u.iter().zip(u.iter()).map(|(a, v)| a * v).sum();
                sx + su + b
            }
        }
    }
}

/// One affine mode `x' = A x + B u + c` active on a polytopic cell in
/// state-control space.
#[derive(Clone, Debug)]
pub struct Mode {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub cell: HPolytope,
    pub cost: StageCost,
}

/// A PWA system over a state box, input box, and goal polytope. Immutable
/// after construction and safe to share across threads.
#[derive(Clone, Debug)]
pub struct PwaSystem {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub modes: Vec<Mode>,
    pub state_box: HPolytope,
    pub input_box: HPolytope,
    pub goal: HPolytope,
    eta_max: OnceLock<DVector<f64>>,
}

#[derive(Clone, Copy, Debug)]
pub struct PartitionReport {
    pub samples: usize,
    /// Fraction of sampled pairs covered by at least one cell.
    pub coverage: f64,
    /// Fraction covered by two or more cells with interior margin > 1e-6.
    pub overlap_defect: f64,
}

impl PwaSystem {
    pub fn new(
        name: String,
        modes: Vec<Mode>,
        state_box: HPolytope,
        input_box: HPolytope,
        goal: HPolytope,
    ) -> Result<PwaSystem, PwaError> {
        let n = state_box.dim();
        let m = input_box.dim();
        if goal.dim() != n {
            return Err(PwaError::Invalid("goal dimension differs from state dimension".into()));
        }
        if modes.is_empty() {
            return Err(PwaError::Invalid("system needs at least one mode".into()));
        }
        for (i, md) in modes.iter().enumerate() {
            if md.a.nrows() != n || md.a.ncols() != n {
                return Err(PwaError::Invalid(format!("mode {i}: A must be {n}x{n}")));
            }
            if md.b.nrows() != n || md.b.ncols() != m {
                return Err(PwaError::Invalid(format!("mode {i}: B must be {n}x{m}")));
            }
            if md.c.len() != n {
                return Err(PwaError::Invalid(format!("mode {i}: c must have length {n}")));
            }
            if md.cell.dim() != n + m {
                return Err(PwaError::Invalid(format!(
                    "mode {i}: cell dimension {} != n+m = {}",
                    md.cell.dim(),
                    n + m
                )));
            }
            match &md.cost {
                StageCost::Constant { w } if !w.is_finite() => {
                    return Err(PwaError::Invalid(format!("mode {i}: non-finite cost")))
                }
                StageCost::Affine { a_x, a_u, .. } if a_x.len() != n || a_u.len() != m => {
                    return Err(PwaError::Invalid(format!("mode {i}: affine cost shape")))
                }
                _ => {}
            }
        }
        let sys = PwaSystem {
            name,
            n,
            m,
            modes,
            state_box,
            input_box,
            goal,
            eta_max: OnceLock::new(),
        };
        sys.check_goal_inside()?;
        sys.check_cells_inside()?;
        Ok(sys)
    }

    /// `goal ⊆ state_box` by support-function LPs over the goal.
    fn check_goal_inside(&self) -> Result<(), PwaError> {
        for i in 0..self.state_box.num_rows() {
            let max = self.support(&self.goal, &self.state_box.matrix().row(i).transpose())?;
            if max > self.state_box.rhs()[i] + CELL_TOL {
                return Err(PwaError::Invalid("goal polytope is not inside the state box".into()));
            }
        }
        Ok(())
    }

    /// Every cell inside `state_box x input_box`, again by support functions.
    fn check_cells_inside(&self) -> Result<(), PwaError> {
        let product = self.state_box.product(&self.input_box);
        for (k, md) in self.modes.iter().enumerate() {
            for i in 0..product.num_rows() {
                let max = self.support(&md.cell, &product.matrix().row(i).transpose())?;
                if max > product.rhs()[i] + 1e-6 {
                    return Err(PwaError::Invalid(format!(
                        "mode {k}: cell exceeds the state-control box"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `max direction . z` over a polytope.
    fn support(&self, poly: &HPolytope, direction: &DVector<f64>) -> Result<f64, PwaError> {
        let d = poly.dim();
        let mut model = MilpModel::new();
        let z = model
            .add_matrix(d, 1, f64::NEG_INFINITY, f64::INFINITY)
            .map_err(|e| PwaError::Invalid(e.to_string()))?;
        for r in 0..poly.num_rows() {
            let mut e = LinExpr::new();
            for c in 0..d {
                e.add_term(z.at(c, 0), poly.matrix()[(r, c)]);
            }
            model.add_le(e, poly.rhs()[r]).map_err(|e| PwaError::Invalid(e.to_string()))?;
        }
        let mut obj = LinExpr::new();
        for c in 0..d {
            obj.add_term(z.at(c, 0), -direction[c]);
        }
        model.set_objective(obj).map_err(|e| PwaError::Invalid(e.to_string()))?;
        match milp::solve_lp(&mut model) {
            Ok(sol) => Ok(-sol.objective),
            Err(LpError::Infeasible(_)) => Ok(f64::NEG_INFINITY),
            Err(LpError::Unbounded(_)) => Ok(f64::INFINITY),
            Err(e) => Err(PwaError::Invalid(e.to_string())),
        }
    }

    /// Lowest mode index whose cell contains `(x, u)` within `CELL_TOL`.
    /// Boundary points resolve deterministically to the lowest index.
    pub fn mode_of(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<usize, PwaError> {
        let mut xu = DVector::zeros(self.n + self.m);
        xu.rows_mut(0, self.n).copy_from(x);
        xu.rows_mut(self.n, self.m).copy_from(u);
        for (i, md) in self.modes.iter().enumerate() {
            if md.cell.contains(&xu, CELL_TOL) {
                return Ok(i);
            }
        }
        Err(PwaError::OutOfPartition)
    }

    /// `x' = A_i x + B_i u + c_i` for the resolved mode.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PwaError> {
        let i = self.mode_of(x, u)?;
        Ok(self.step_in_mode(i, x, u))
    }

    pub fn step_in_mode(&self, mode: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let md = &self.modes[mode];
        &md.a * x + &md.b * u + &md.c
    }

    pub fn stage_cost_eval(&self, mode: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.modes[mode].cost.eval(x, u)
    }

    /// Half-widths `eta_max` of a centered box containing the state box.
    pub fn eta_max(&self) -> &DVector<f64> {
        self.eta_max.get_or_init(|| {
            let (lo, hi) = self
                .state_box
                .bounding_box()
                .expect("state box must be bounded");
            DVector::from_fn(self.n, |k, _| lo[k].abs().max(hi[k].abs()))
        })
    }

    /// Samples the state-control box and reports cell coverage and
    /// strict-interior overlap.
    pub fn validate_partition<R: Rng>(&self, n_samples: usize, rng: &mut R) -> PartitionReport {
        let product = self.state_box.product(&self.input_box);
        let (lo, hi) = product.bounding_box().expect("bounded boxes");
        let mut covered = 0usize;
        let mut overlap = 0usize;
        let n_samples = n_samples.max(1);
        for _ in 0..n_samples {
            // The product of boxes is a box, so rejection-free sampling works.
            let z = DVector::from_fn(self.n + self.m, |k, _| {
                if hi[k] > lo[k] {
                    rng.gen_range(lo[k]..=hi[k])
                } else {
                    lo[k]
                }
            });
            if !product.contains(&z, CELL_TOL) {
                continue;
            }
            let inside = self.modes.iter().filter(|m| m.cell.contains(&z, CELL_TOL)).count();
            if inside >= 1 {
                covered += 1;
            }
            let strict = self.modes.iter().filter(|m| m.cell.margin(&z) > 1e-6).count();
            if strict >= 2 {
                overlap += 1;
            }
        }
        PartitionReport {
            samples: n_samples,
            coverage: covered as f64 / n_samples as f64,
            overlap_defect: overlap as f64 / n_samples as f64,
        }
    }
}

// -------- wire format --------

#[derive(Serialize, Deserialize)]
struct ModeWire {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
    cell: HPolytope,
    cost: StageCost,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct PwaSystemWire {
    #[serde(default)]
    pub name: String,
    pub n: usize,
    pub m: usize,
    modes: Vec<ModeWire>,
    state_box: HPolytope,
    input_box: HPolytope,
    goal: HPolytope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

fn to_matrix(rows: &[Vec<f64>], nr: usize, nc: usize, what: &str) -> Result<DMatrix<f64>, PwaError> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(PwaError::Invalid(format!("{what}: expected {nr}x{nc} matrix")));
    }
    Ok(DMatrix::from_row_iterator(nr, nc, rows.iter().flatten().copied()))
}

impl PwaSystemWire {
    pub fn into_system(self) -> Result<PwaSystem, PwaError> {
        let mut modes = Vec::with_capacity(self.modes.len());
        for (i, mw) in self.modes.into_iter().enumerate() {
            modes.push(Mode {
                a: to_matrix(&mw.a, self.n, self.n, &format!("mode {i} A"))?,
                b: to_matrix(&mw.b, self.n, self.m, &format!("mode {i} B"))?,
                c: DVector::from_vec(mw.c),
                cell: mw.cell,
                cost: mw.cost,
            });
        }
        PwaSystem::new(self.name, modes, self.state_box, self.input_box, self.goal)
    }

    pub fn from_system(sys: &PwaSystem) -> PwaSystemWire {
        let modes = sys
            .modes
            .iter()
            .map(|md| ModeWire {
                a: (0..sys.n).map(|r| md.a.row(r).iter().copied().collect()).collect(),
                b: (0..sys.n).map(|r| md.b.row(r).iter().copied().collect()).collect(),
                c: md.c.iter().copied().collect(),
                cell: md.cell.clone(),
                cost: md.cost.clone(),
            })
            .collect();
        PwaSystemWire {
            name: sys.name.clone(),
            n: sys.n,
            m: sys.m,
            modes,
            state_box: sys.state_box.clone(),
            input_box: sys.input_box.clone(),
            goal: sys.goal.clone(),
            notes: None,
        }
    }
}

impl Serialize for PwaSystem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PwaSystemWire::from_system(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PwaSystem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = PwaSystemWire::deserialize(d)?;
        wire.into_system().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two-mode toy: left half-plane keeps x1, right half-plane flips it.
    pub(crate) fn two_mode_toy() -> PwaSystem {
        let state_box = HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]);
        let input_box = HPolytope::from_box(&[-1.0], &[1.0]);
        let goal = HPolytope::from_box(&[-0.1, -0.1], &[0.1, 0.1]);
        // Cell 0: x1 <= 0 within the box; cell 1: x1 >= 0.
        let cell = |sign: f64| {
            let rows = vec![
                vec![sign, 0.0, 0.0],
                vec![-sign, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, -1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![0.0, 0.0, -1.0],
            ];
            let a = DMatrix::from_row_iterator(6, 3, rows.into_iter().flatten());
            let b = DVector::from_vec(vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
            HPolytope::new(a, b).unwrap()
        };
        let mode = |sign: f64, flip: f64| Mode {
            a: DMatrix::from_row_slice(2, 2, &[flip, 0.0, 0.0, 1.0]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            c: DVector::zeros(2),
            cell: cell(sign),
            cost: StageCost::Constant { w: 1.0 },
        };
        PwaSystem::new(
            "toy".into(),
            vec![mode(1.0, 1.0), mode(-1.0, -1.0)],
            state_box,
            input_box,
            goal,
        )
        .unwrap()
    }

    #[test]
    fn mode_resolution_and_tie_break() {
        let sys = two_mode_toy();
        let u = DVector::from_vec(vec![0.0]);
        assert_eq!(sys.mode_of(&DVector::from_vec(vec![-0.5, 0.0]), &u).unwrap(), 0);
        assert_eq!(sys.mode_of(&DVector::from_vec(vec![0.5, 0.0]), &u).unwrap(), 1);
        // Boundary x1 = 0 belongs to both; lowest index wins.
        assert_eq!(sys.mode_of(&DVector::from_vec(vec![0.0, 0.0]), &u).unwrap(), 0);
        // Outside the box: no cell.
        assert!(matches!(
            sys.mode_of(&DVector::from_vec(vec![5.0, 0.0]), &u),
            Err(PwaError::OutOfPartition)
        ));
    }

    #[test]
    fn step_is_exact_affine_arithmetic() {
        use rand::Rng;
        let sys = two_mode_toy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x = DVector::from_vec(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let u = DVector::from_vec(vec![rng.gen_range(-1.0..1.0)]);
            let i = sys.mode_of(&x, &u).unwrap();
            let md = &sys.modes[i];
            let manual = &md.a * &x + &md.b * &u + &md.c;
            let got = sys.step(&x, &u).unwrap();
            assert_eq!(got, manual);
        }
    }

    #[test]
    fn partition_coverage_full_and_gap_detected() {
        let sys = two_mode_toy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rep = sys.validate_partition(2000, &mut rng);
        assert_eq!(rep.coverage, 1.0);
        assert_eq!(rep.overlap_defect, 0.0);

        // Remove one cell: coverage drops.
        let mut broken = sys.clone();
        broken.modes.remove(1);
        let rep = broken.validate_partition(2000, &mut rng);
        assert!(rep.coverage < 1.0);

        // Single-sample report works.
        let rep = sys.validate_partition(1, &mut rng);
        assert_eq!(rep.samples, 1);
    }

    #[test]
    fn stage_cost_forms() {
        let x = DVector::from_vec(vec![2.0, 0.0]);
        let u = DVector::from_vec(vec![0.0]);
        assert_eq!(StageCost::Constant { w: 1.0 }.eval(&x, &u), 1.0);
        assert_eq!(StageCost::Constant { w: 0.0 }.eval(&x, &u), 0.0);
        let affine = StageCost::Affine { a_x: vec![1.0, 0.0], a_u: vec![0.0], b: 0.0 };
        assert_eq!(affine.eval(&x, &u), 2.0);
    }

    #[test]
    fn goal_outside_state_box_rejected() {
        let state_box = HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]);
        let input_box = HPolytope::from_box(&[-1.0], &[1.0]);
        let goal = HPolytope::from_box(&[0.9, 0.9], &[1.5, 1.5]);
        let cell = state_box.product(&input_box);
        let modes = vec![Mode {
            a: DMatrix::identity(2, 2),
            b: DMatrix::zeros(2, 1),
            c: DVector::zeros(2),
            cell,
            cost: StageCost::Constant { w: 1.0 },
        }];
        assert!(PwaSystem::new("bad".into(), modes, state_box, input_box, goal).is_err());
    }

    #[test]
    fn eta_max_covers_state_box() {
        let sys = two_mode_toy();
        let eta = sys.eta_max();
        assert_eq!(eta.as_slice(), &[1.0, 1.0]);
    }
}
