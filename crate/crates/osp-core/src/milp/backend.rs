//! HiGHS-backed solve of a [`LinearModel`].

use std::ops::Bound;
use std::time::Instant;

use highs::{HighsModelStatus, RowProblem, Sense};

use super::{
    ConstraintSense, LinearModel, ObjSense, SolveError, SolveResult, SolveStatus, SolverParams,
    VarKind,
};

fn bound_pair(lb: f64, ub: f64) -> (Bound<f64>, Bound<f64>) {
    let lo = if lb.is_finite() {
        Bound::Included(lb)
    } else {
        Bound::Unbounded
    };
    let hi = if ub.is_finite() {
        Bound::Included(ub)
    } else {
        Bound::Unbounded
    };
    (lo, hi)
}

pub(super) fn solve_highs(
    model: &LinearModel,
    params: &SolverParams,
) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    let (obj, obj_sense) = model.objective();

    let mut coefs = vec![0.0; model.num_vars()];
    for &(v, c) in &obj.terms {
        coefs[v.index()] += c;
    }

    let mut pb = RowProblem::default();
    let mut cols = Vec::with_capacity(model.num_vars());
    for (i, v) in model.variables().iter().enumerate() {
        let bounds = bound_pair(v.lb, v.ub);
        let col = match v.kind {
            VarKind::Continuous => pb.add_column(coefs[i], bounds),
            VarKind::Binary => pb.add_integer_column(coefs[i], bounds),
        };
        cols.push(col);
    }
    for c in model.constraints() {
        let row: Vec<_> = c
            .expr
            .terms
            .iter()
            .map(|&(v, coef)| (cols[v.index()], coef))
            .collect();
        let bounds: (Bound<f64>, Bound<f64>) = match c.sense {
            ConstraintSense::Le => (Bound::Unbounded, Bound::Included(c.rhs)),
            ConstraintSense::Ge => (Bound::Included(c.rhs), Bound::Unbounded),
            ConstraintSense::Eq => (Bound::Included(c.rhs), Bound::Included(c.rhs)),
        };
        pb.add_row(bounds, &row);
    }

    let sense = match obj_sense {
        ObjSense::Minimize => Sense::Minimise,
        ObjSense::Maximize => Sense::Maximise,
    };
    let mut m = pb.optimise(sense);
    m.set_option("output_flag", false);
    m.set_option("threads", 1i32);
    m.set_option("random_seed", 0i32);
    m.set_option("primal_feasibility_tolerance", params.feas_tol.max(1e-10));
    m.set_option("dual_feasibility_tolerance", params.feas_tol.max(1e-10));
    m.set_option("mip_feasibility_tolerance", params.feas_tol.max(1e-10));
    m.set_option("mip_rel_gap", params.mip_gap.max(0.0));
    m.set_option("mip_abs_gap", 1e-9f64);
    if let Some(limit) = params.time_limit {
        m.set_option("time_limit", limit);
    }

    let solved = m.try_solve().map_err(|s| {
        SolveError::Backend(format!("HiGHS returned run status {s:?}"))
    })?;

    let status = match solved.status() {
        HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
        HighsModelStatus::Infeasible => SolveStatus::Infeasible,
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
            SolveStatus::Unbounded
        }
        HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
            SolveStatus::Limit
        }
        other => {
            return Err(SolveError::Backend(format!(
                "HiGHS terminated with model status {other:?}"
            )))
        }
    };

    let (primal, dual) = if status == SolveStatus::Optimal {
        let sol = solved.get_solution();
        let primal = sol.columns().to_vec();
        let dual = if model.is_pure_lp() {
            sol.dual_rows().to_vec()
        } else {
            Vec::new()
        };
        (primal, dual)
    } else {
        (Vec::new(), Vec::new())
    };

    // Objective recomputed from the primal point; one source of truth for
    // downstream comparisons regardless of backend conventions.
    let objective = if primal.is_empty() {
        f64::NAN
    } else {
        obj.eval(&primal)
    };

    Ok(SolveResult {
        status,
        objective,
        primal,
        dual,
        solve_time: start.elapsed().as_secs_f64(),
    })
}
