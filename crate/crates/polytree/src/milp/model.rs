//! Model construction: variables, linear constraints, objective.
//!
//! Models are build-then-solve: once a solve has run, further builder calls
//! return [`MilpError::ModelFrozen`].

use std::fmt;

use super::MilpError;

/// Handle to a scalar variable of a [`MilpModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to a constraint row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstrId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug)]
pub(crate) struct Variable {
    pub lo: f64,
    pub hi: f64,
    pub kind: VarKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sense::Le => write!(f, "<="),
            Sense::Eq => write!(f, "="),
        }
    }
}

/// A linear expression `sum coef_j x_j + constant`.
#[derive(Clone, Debug, Default)]
pub struct LinExpr {
    pub(crate) terms: Vec<(VarId, f64)>,
    pub(crate) constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(var: VarId, coef: f64) -> Self {
        Self { terms: vec![(var, coef)], constant: 0.0 }
    }

    pub fn var(var: VarId) -> Self {
        Self::term(var, 1.0)
    }

    pub fn add_term(&mut self, var: VarId, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        if scale != 0.0 {
            for &(v, c) in &other.terms {
                self.add_term(v, c * scale);
            }
            self.constant += other.constant * scale;
        }
        self
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Collapses duplicate variables and drops zero coefficients.
    pub(crate) fn compact(&self) -> LinExpr {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|&(v, _)| v);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match out.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        LinExpr { terms: out, constant: self.constant }
    }

    /// Evaluates the expression under a full assignment.
    pub fn eval(&self, values: &[f64]) -> f64 {
        let mut acc = self.constant;
        for &(v, c) in &self.terms {
            acc += c * values[v.0];
        }
        acc
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Constraint {
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
    /// Big-M value when this row belongs to a disjunctive group.
    pub big_m: Option<f64>,
}

/// A rectangular block of scalar variables registered as one handle.
#[derive(Clone, Debug)]
pub struct MatrixVar {
    pub rows: usize,
    pub cols: usize,
    ids: Vec<VarId>,
}

impl MatrixVar {
    /// Row-major entry handle.
    pub fn at(&self, r: usize, c: usize) -> VarId {
        assert!(r < self.rows && c < self.cols, "matrix var index out of range");
        self.ids[r * self.cols + c]
    }

    pub fn ids(&self) -> &[VarId] {
        &self.ids
    }
}

/// Linear model with continuous and binary variables.
///
/// The model stores constraints in the sense they were added; normalization
/// to standard form happens inside the solver.
#[derive(Clone, Debug, Default)]
pub struct MilpModel {
    pub(crate) vars: Vec<Variable>,
    pub(crate) constrs: Vec<Constraint>,
    pub(crate) objective: LinExpr,
    /// Groups of binaries constrained to sum to one, used for branching.
    pub(crate) sos1_groups: Vec<Vec<VarId>>,
    pub(crate) frozen: bool,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constrs(&self) -> usize {
        self.constrs.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn binary_ids(&self) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
            .collect()
    }

    pub fn var_bounds(&self, var: VarId) -> Result<(f64, f64), MilpError> {
        let v = self.vars.get(var.0).ok_or(MilpError::UndeclaredVariable)?;
        Ok((v.lo, v.hi))
    }

    pub fn var_kind(&self, var: VarId) -> Result<VarKind, MilpError> {
        let v = self.vars.get(var.0).ok_or(MilpError::UndeclaredVariable)?;
        Ok(v.kind)
    }

    fn check_open(&self) -> Result<(), MilpError> {
        if self.frozen {
            Err(MilpError::ModelFrozen)
        } else {
            Ok(())
        }
    }

    fn check_expr(&self, expr: &LinExpr) -> Result<(), MilpError> {
        for &(v, c) in &expr.terms {
            if v.0 >= self.vars.len() {
                return Err(MilpError::UndeclaredVariable);
            }
            if !c.is_finite() {
                return Err(MilpError::NonFiniteCoefficient);
            }
        }
        if !expr.constant.is_finite() {
            return Err(MilpError::NonFiniteCoefficient);
        }
        Ok(())
    }

    pub fn add_variable(&mut self, lo: f64, hi: f64) -> Result<VarId, MilpError> {
        self.check_open()?;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(MilpError::InvalidBounds);
        }
        self.vars.push(Variable { lo, hi, kind: VarKind::Continuous });
        Ok(VarId(self.vars.len() - 1))
    }

    pub fn add_binary(&mut self) -> Result<VarId, MilpError> {
        self.check_open()?;
        self.vars.push(Variable { lo: 0.0, hi: 1.0, kind: VarKind::Binary });
        Ok(VarId(self.vars.len() - 1))
    }

    /// Registers a `rows x cols` block of continuous scalars as one handle.
    pub fn add_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Result<MatrixVar, MilpError> {
        self.check_open()?;
        let mut ids = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            ids.push(self.add_variable(lo, hi)?);
        }
        Ok(MatrixVar { rows, cols, ids })
    }

    /// Tightens the bounds of an existing variable (intersection).
    pub fn tighten_bounds(&mut self, var: VarId, lo: f64, hi: f64) -> Result<(), MilpError> {
        self.check_open()?;
        let v = self.vars.get_mut(var.0).ok_or(MilpError::UndeclaredVariable)?;
        v.lo = v.lo.max(lo);
        v.hi = v.hi.min(hi);
        if v.lo > v.hi + 1e-12 {
            return Err(MilpError::InvalidBounds);
        }
        Ok(())
    }

    /// Replaces the bounds of an existing continuous variable.
    pub fn set_bounds(&mut self, var: VarId, lo: f64, hi: f64) -> Result<(), MilpError> {
        self.check_open()?;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(MilpError::InvalidBounds);
        }
        let v = self.vars.get_mut(var.0).ok_or(MilpError::UndeclaredVariable)?;
        v.lo = lo;
        v.hi = hi;
        Ok(())
    }

    /// Fixes a variable to a value.
    pub fn fix(&mut self, var: VarId, value: f64) -> Result<(), MilpError> {
        self.check_open()?;
        let v = self.vars.get_mut(var.0).ok_or(MilpError::UndeclaredVariable)?;
        v.lo = value;
        v.hi = value;
        Ok(())
    }

    pub fn add_constraint(&mut self, expr: LinExpr, sense: Sense, rhs: f64) -> Result<ConstrId, MilpError> {
        self.add_row(expr, sense, rhs, None)
    }

    /// Adds a row belonging to a big-M disjunction, recording its M value.
    pub fn add_big_m_constraint(
        &mut self,
        expr: LinExpr,
        sense: Sense,
        rhs: f64,
        big_m: f64,
    ) -> Result<ConstrId, MilpError> {
        self.add_row(expr, sense, rhs, Some(big_m))
    }

    fn add_row(&mut self, expr: LinExpr, sense: Sense, rhs: f64, big_m: Option<f64>) -> Result<ConstrId, MilpError> {
        self.check_open()?;
        self.check_expr(&expr)?;
        if !rhs.is_finite() {
            return Err(MilpError::NonFiniteCoefficient);
        }
        let compact = expr.compact();
        // Fold the expression constant into the right-hand side.
        let rhs = rhs - compact.constant;
        let expr = LinExpr { terms: compact.terms, constant: 0.0 };
        self.constrs.push(Constraint { expr, sense, rhs, big_m });
        Ok(ConstrId(self.constrs.len() - 1))
    }

    /// Convenience: `lhs <= rhs`.
    pub fn add_le(&mut self, expr: LinExpr, rhs: f64) -> Result<ConstrId, MilpError> {
        self.add_constraint(expr, Sense::Le, rhs)
    }

    /// Convenience: `lhs = rhs`.
    pub fn add_eq(&mut self, expr: LinExpr, rhs: f64) -> Result<ConstrId, MilpError> {
        self.add_constraint(expr, Sense::Eq, rhs)
    }

    /// Convenience: `lhs >= rhs`, stored as `-lhs <= -rhs`.
    pub fn add_ge(&mut self, expr: LinExpr, rhs: f64) -> Result<ConstrId, MilpError> {
        let mut neg = LinExpr::new();
        neg.add_expr(&expr, -1.0);
        self.add_constraint(neg, Sense::Le, -rhs)
    }

    /// Sets the (minimized) objective.
    pub fn set_objective(&mut self, expr: LinExpr) -> Result<(), MilpError> {
        self.check_open()?;
        self.check_expr(&expr)?;
        self.objective = expr.compact();
        Ok(())
    }

    /// Declares a group of binaries that must sum to one. The branch-and-bound
    /// branches on the whole group when every member is fractional. The sum
    /// constraint itself must be added separately.
    pub fn mark_sos1(&mut self, vars: Vec<VarId>) -> Result<(), MilpError> {
        self.check_open()?;
        for v in &vars {
            if v.0 >= self.vars.len() {
                return Err(MilpError::UndeclaredVariable);
            }
        }
        self.sos1_groups.push(vars);
        Ok(())
    }

    /// Iterator over `(row index, M)` for all recorded big-M rows.
    pub fn big_m_rows(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.constrs
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.big_m.map(|m| (i, m)))
    }

    pub(crate) fn mark_frozen(&mut self) {
        self.frozen = true;
    }

    /// Maximum absolute constraint violation of an assignment.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constrs {
            let lhs = c.expr.eval(values);
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for (j, v) in self.vars.iter().enumerate() {
            worst = worst.max(v.lo - values[j]).max(values[j] - v.hi);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_counts_handles() {
        let mut m = MilpModel::new();
        let x = m.add_variable(0.0, 10.0).unwrap();
        let y = m.add_variable(0.0, 10.0).unwrap();
        let mut e = LinExpr::new();
        e.add_term(x, 1.0).add_term(y, 1.0);
        m.add_le(e, 1.0).unwrap();
        assert_eq!(m.num_vars(), 2);
        assert_eq!(m.num_constrs(), 1);
    }

    #[test]
    fn binary_bounds_are_unit_interval() {
        let mut m = MilpModel::new();
        let b = m.add_binary().unwrap();
        assert_eq!(m.var_bounds(b).unwrap(), (0.0, 1.0));
        assert_eq!(m.var_kind(b).unwrap(), VarKind::Binary);
    }

    #[test]
    fn undeclared_handle_rejected() {
        let mut big = MilpModel::new();
        for _ in 0..5 {
            big.add_variable(0.0, 1.0).unwrap();
        }
        let foreign = big.binary_ids(); // empty; craft a handle via matrix instead
        assert!(foreign.is_empty());
        let mv = big.add_matrix(1, 5, 0.0, 1.0).unwrap();
        let stray = mv.at(0, 4);

        let mut small = MilpModel::new();
        small.add_variable(0.0, 1.0).unwrap();
        let err = small.add_le(LinExpr::var(stray), 1.0).unwrap_err();
        assert!(matches!(err, MilpError::UndeclaredVariable));
    }

    #[test]
    fn frozen_model_rejects_builder_calls() {
        let mut m = MilpModel::new();
        m.add_variable(0.0, 1.0).unwrap();
        m.mark_frozen();
        assert!(matches!(m.add_variable(0.0, 1.0), Err(MilpError::ModelFrozen)));
        assert!(matches!(m.add_binary(), Err(MilpError::ModelFrozen)));
    }

    #[test]
    fn expr_compaction_merges_duplicates() {
        let mut m = MilpModel::new();
        let x = m.add_variable(0.0, 1.0).unwrap();
        let mut e = LinExpr::new();
        e.add_term(x, 1.0).add_term(x, 2.0).add_constant(4.0);
        let c = e.compact();
        assert_eq!(c.terms, vec![(x, 3.0)]);
        assert_eq!(c.constant, 4.0);
    }

    #[test]
    fn constraint_folds_constant_into_rhs() {
        let mut m = MilpModel::new();
        let x = m.add_variable(0.0, 10.0).unwrap();
        let mut e = LinExpr::new();
        e.add_term(x, 2.0).add_constant(3.0);
        m.add_le(e, 5.0).unwrap();
        assert_eq!(m.constrs[0].rhs, 2.0);
        assert!(m.constrs[0].expr.constant == 0.0);
    }
}
