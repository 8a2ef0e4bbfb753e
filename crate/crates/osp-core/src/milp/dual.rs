//! Mechanical LP dualization.
//!
//! For a minimization LP
//!
//! ```text
//!   min c'y   s.t.  a_k'y {<=,=,>=} b_k,   y free or y >= 0
//! ```
//!
//! the dual built here is
//!
//! ```text
//!   max b'pi  s.t.  A'pi {<=,=} c,
//!                   pi_k <= 0 for <=-rows, pi_k >= 0 for >=-rows, free for =-rows
//! ```
//!
//! with one dual constraint per primal variable: an equality when the primal
//! variable is free, `<=` when it is nonnegative.

use super::{
    ConId, ConstraintSense, LinExpr, LinearModel, ModelError, ObjSense, VarId, VarKind,
};

/// The dual LP of a minimization LP, with index maps back to the primal.
pub struct DualLp {
    pub model: LinearModel,
    /// Dual variable corresponding to each primal constraint.
    pub dual_var_of_row: Vec<VarId>,
    /// Dual constraint corresponding to each primal variable.
    pub row_of_primal_var: Vec<ConId>,
}

pub(super) fn dualize(primal: &LinearModel) -> Result<DualLp, ModelError> {
    let (obj, sense) = primal.objective();
    if sense != ObjSense::Minimize {
        return Err(ModelError::NotPureLp("objective must be a minimization".into()));
    }
    for v in primal.variables() {
        if v.kind != VarKind::Continuous {
            return Err(ModelError::NotPureLp(format!("variable `{}` is integer", v.name)));
        }
        let nonneg = v.lb == 0.0 && v.ub == f64::INFINITY;
        let free = v.lb == f64::NEG_INFINITY && v.ub == f64::INFINITY;
        if !nonneg && !free {
            return Err(ModelError::GeneralBounds {
                var: v.name.clone(),
                lb: v.lb,
                ub: v.ub,
            });
        }
    }

    let mut dual = LinearModel::new();
    let mut dual_var_of_row = Vec::with_capacity(primal.num_cons());
    let mut dual_obj = LinExpr::new();
    for c in primal.constraints() {
        let (lb, ub) = match c.sense {
            ConstraintSense::Le => (f64::NEG_INFINITY, 0.0),
            ConstraintSense::Ge => (0.0, f64::INFINITY),
            ConstraintSense::Eq => (f64::NEG_INFINITY, f64::INFINITY),
        };
        let pi = dual.add_continuous(format!("dual[{}]", c.name), lb, ub);
        dual_obj.add(pi, c.rhs);
        dual_var_of_row.push(pi);
    }

    // Transpose: columns of the primal become dual rows.
    let mut columns: Vec<LinExpr> = vec![LinExpr::new(); primal.num_vars()];
    for (k, c) in primal.constraints().iter().enumerate() {
        for &(v, coef) in &c.expr.terms {
            columns[v.index()].add(dual_var_of_row[k], coef);
        }
    }
    let mut costs = vec![0.0; primal.num_vars()];
    for &(v, coef) in &obj.terms {
        costs[v.index()] += coef;
    }

    let mut row_of_primal_var = Vec::with_capacity(primal.num_vars());
    for (i, v) in primal.variables().iter().enumerate() {
        let sense = if v.lb == 0.0 {
            ConstraintSense::Le
        } else {
            ConstraintSense::Eq
        };
        let row = dual.add_constraint(
            format!("drow[{}]", v.name),
            std::mem::take(&mut columns[i]),
            sense,
            costs[i],
        );
        row_of_primal_var.push(row);
    }

    dual.set_objective(ObjSense::Maximize, dual_obj);
    Ok(DualLp {
        model: dual,
        dual_var_of_row,
        row_of_primal_var,
    })
}
