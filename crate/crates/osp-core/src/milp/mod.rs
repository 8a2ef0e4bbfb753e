//! Solver-agnostic linear and mixed-integer linear programs.
//!
//! Models are built as plain data (variables with bounds and integrality,
//! named linear constraints, a linear objective) and handed to a backend for
//! solving. The backend returns primal values, constraint duals (pure LPs
//! only), and a status. A mechanical LP dualizer is provided for building
//! dual subproblems and for strong-duality cross-checks.

mod backend;
mod dual;

pub use dual::DualLp;

use std::collections::HashSet;
use thiserror::Error;

/// Handle to a variable of a [`LinearModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to a constraint of a [`LinearModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConId(pub(crate) usize);

impl ConId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub kind: VarKind,
}

/// Sparse linear expression over model variables.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(var: VarId, coef: f64) -> Self {
        Self {
            terms: vec![(var, coef)],
        }
    }

    pub fn add(&mut self, var: VarId, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
        self
    }

    pub fn extend(&mut self, other: &LinExpr) -> &mut Self {
        self.terms.extend_from_slice(&other.terms);
        self
    }

    /// Evaluates the expression at a full primal point.
    pub fn eval(&self, primal: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * primal[v.0]).sum()
    }
}

impl FromIterator<(VarId, f64)> for LinExpr {
    fn from_iter<T: IntoIterator<Item = (VarId, f64)>>(iter: T) -> Self {
        Self {
            terms: iter.into_iter().filter(|&(_, c)| c != 0.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub expr: LinExpr,
    pub sense: ConstraintSense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duplicate constraint name `{0}`")]
    DuplicateConstraintName(String),
    #[error("constraint `{constraint}` references an undeclared variable")]
    UnknownVariable { constraint: String },
    #[error("variable `{var}` has inverted bounds [{lb}, {ub}]")]
    InvertedBounds { var: String, lb: f64, ub: f64 },
    #[error("binary variable `{var}` has bounds outside [0, 1]")]
    BinaryBounds { var: String },
    #[error("assignment {value} for `{var}` is outside its bounds")]
    FixOutOfBounds { var: String, value: f64 },
    #[error("dualization requires a pure LP: {0}")]
    NotPureLp(String),
    #[error(
        "dualization supports only free or nonnegative variables; `{var}` has bounds [{lb}, {ub}]"
    )]
    GeneralBounds { var: String, lb: f64, ub: f64 },
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("solver backend failure: {0}")]
    Backend(String),
}

/// Backend tolerances and limits, exposed on the CLI as
/// `--feas-tol`, `--mip-gap`, and `--time-limit`.
#[derive(Debug, Clone)]
pub struct SolverParams {
    pub feas_tol: f64,
    pub mip_gap: f64,
    pub time_limit: Option<f64>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            mip_gap: 1e-6,
            time_limit: None,
        }
    }
}

impl SolverParams {
    /// Tight tolerances for internal cross-checks and Benders bookkeeping.
    pub fn strict() -> Self {
        Self {
            feas_tol: 1e-8,
            mip_gap: 1e-9,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective value in the model's own sense; meaningful for `Optimal`
    /// (and best-so-far for `Limit` when a feasible point was found).
    pub objective: f64,
    /// Value per variable, indexed like the model's variables.
    pub primal: Vec<f64>,
    /// Value per constraint; populated for pure LPs only.
    pub dual: Vec<f64>,
    pub solve_time: f64,
}

impl SolveResult {
    pub fn value(&self, var: VarId) -> f64 {
        self.primal[var.0]
    }

    pub fn dual_value(&self, con: ConId) -> f64 {
        self.dual[con.0]
    }
}

/// Solver-agnostic MILP/LP in list form.
#[derive(Debug, Clone, Default)]
pub struct LinearModel {
    vars: Vec<Variable>,
    cons: Vec<Constraint>,
    objective: LinExpr,
    obj_sense: Option<ObjSense>,
}

impl LinearModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lb: f64,
        ub: f64,
        kind: VarKind,
    ) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lb,
            ub,
            kind,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> VarId {
        self.add_var(name, lb, ub, VarKind::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, VarKind::Binary)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        expr: LinExpr,
        sense: ConstraintSense,
        rhs: f64,
    ) -> ConId {
        self.cons.push(Constraint {
            name: name.into(),
            expr,
            sense,
            rhs,
        });
        ConId(self.cons.len() - 1)
    }

    pub fn set_objective(&mut self, sense: ObjSense, expr: LinExpr) {
        self.obj_sense = Some(sense);
        self.objective = expr;
    }

    pub fn objective(&self) -> (&LinExpr, ObjSense) {
        (&self.objective, self.obj_sense.unwrap_or(ObjSense::Minimize))
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.cons
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_cons(&self) -> usize {
        self.cons.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Checks the model's structural invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut names = HashSet::with_capacity(self.cons.len());
        for v in &self.vars {
            if v.lb > v.ub {
                return Err(ModelError::InvertedBounds {
                    var: v.name.clone(),
                    lb: v.lb,
                    ub: v.ub,
                });
            }
            if v.kind == VarKind::Binary && (v.lb < 0.0 || v.ub > 1.0) {
                return Err(ModelError::BinaryBounds { var: v.name.clone() });
            }
        }
        for c in &self.cons {
            if !names.insert(c.name.as_str()) {
                return Err(ModelError::DuplicateConstraintName(c.name.clone()));
            }
            for &(v, _) in &c.expr.terms {
                if v.0 >= self.vars.len() {
                    return Err(ModelError::UnknownVariable {
                        constraint: c.name.clone(),
                    });
                }
            }
        }
        for &(v, _) in &self.objective.terms {
            if v.0 >= self.vars.len() {
                return Err(ModelError::UnknownVariable {
                    constraint: "<objective>".into(),
                });
            }
        }
        Ok(())
    }

    /// Returns a copy with `lb = ub = value` on each listed variable.
    /// The original model is unchanged.
    pub fn fix_variables(&self, assignments: &[(VarId, f64)]) -> Result<LinearModel, ModelError> {
        let mut fixed = self.clone();
        for &(var, value) in assignments {
            let v = &mut fixed.vars[var.0];
            if value < v.lb - 1e-12 || value > v.ub + 1e-12 {
                return Err(ModelError::FixOutOfBounds {
                    var: v.name.clone(),
                    value,
                });
            }
            v.lb = value;
            v.ub = value;
        }
        Ok(fixed)
    }

    /// Solves the model with the default backend.
    pub fn solve(&self, params: &SolverParams) -> Result<SolveResult, SolveError> {
        self.validate()?;
        backend::solve_highs(self, params)
    }

    /// Builds the LP dual of a pure minimization LP whose variables are all
    /// either free or nonnegative. See [`DualLp`].
    pub fn dualize(&self) -> Result<DualLp, ModelError> {
        dual::dualize(self)
    }

    pub fn is_pure_lp(&self) -> bool {
        self.vars.iter().all(|v| v.kind == VarKind::Continuous)
    }
}
