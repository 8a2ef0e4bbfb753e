//! Adaptive robust optimization via Benders decomposition: a master problem
//! holding the investment and battery-commitment decisions plus one primal
//! operational block per recorded worst-case realization, and the dual
//! subproblem that searches the budgeted set for the next worst case.
//!
//! The cuts are implemented as primal blocks sharing the first-stage
//! variables, with the cut variable bounding every block's operational
//! cost; this is equivalent to scalar dual cuts for fixed-recourse problems
//! and avoids re-deriving cut coefficients. The upper bound is updated as
//! `UB = min(UB, investment(x̂) + θ)` with θ the dual-subproblem optimum.

use crate::baselines::EngineError;
use crate::deterministic::{
    BlockData, InvestmentValues, InvestmentVars, OperationVars, add_investment,
    add_operational_block, investment_cost, investment_cost_expr,
};
use crate::milp::{
    ConstraintSense, LinExpr, LinearModel, ObjSense, SolveStatus, SolverParams, VarId,
};
use crate::model::CaseData;
use crate::subproblem::{DualSubproblem, PrimalSub, SubBlockSpec, attach_uncertainty,
    build_primal_sub};
use crate::uncertainty::{BudgetedSet, Realization};

/// Master problem handles.
pub struct MasterState {
    pub model: LinearModel,
    pub inv: InvestmentVars,
    /// Shared battery-commitment binaries `[bus][slot]`.
    pub w: Vec<Vec<VarId>>,
    pub eta: VarId,
    pub blocks: Vec<OperationVars>,
}

/// One Benders iteration of the trace.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub lb: f64,
    pub ub: f64,
    pub mp_time: f64,
    pub dsp_time: f64,
    /// Worst-case operational cost found by the subproblem; per scenario
    /// where scenarios exist, otherwise a single entry.
    pub theta: Vec<f64>,
    pub u_star: Realization,
}

/// Converged (or best-so-far) robust plan with the full iteration trace.
#[derive(Debug, Clone)]
pub struct RobustSolution {
    pub investments: InvestmentValues,
    /// Final upper bound: the certified worst-case total cost of the plan.
    pub objective: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub worst_case: Realization,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

/// Master problem: investments, shared battery commitments, one operational
/// block per recorded realization, and a cut variable bounding every
/// block's operational cost.
pub fn build_master(
    case: &CaseData,
    recorded: &[Realization],
) -> Result<MasterState, EngineError> {
    if recorded.is_empty() {
        return Err(EngineError::InvalidArgument(
            "master needs at least one recorded realization".into(),
        ));
    }
    let nb = case.n_buses();
    let nt = case.horizon;
    let mut m = LinearModel::new();
    let inv = add_investment(&mut m, case);
    let w: Vec<Vec<VarId>> = (0..nb)
        .map(|i| (0..nt).map(|t| m.add_binary(format!("w[{i},{t}]"))).collect())
        .collect();
    for i in 0..nb {
        for t in 0..nt {
            let mut gate = LinExpr::term(w[i][t], 1.0);
            gate.add(inv.nu_bt[i], -1.0);
            m.add_constraint(format!("w_gate[{i},{t}]"), gate, ConstraintSense::Le, 0.0);
        }
    }
    let eta = m.add_continuous("eta", 0.0, f64::INFINITY);

    let ql = case.loads.nominal_ql(&case.probabilities);
    let price = case.costs.nominal_price(&case.probabilities);
    let mut blocks = Vec::with_capacity(recorded.len());
    for (k, u) in recorded.iter().enumerate() {
        let data = BlockData {
            pl: &u.pl,
            ql: &ql,
            pv: &u.pv,
            price: &price,
            weight: 1.0,
        };
        let (op, cost) = add_operational_block(&mut m, case, &inv, Some(&w), &data, &format!("r{k}:"))?;
        let mut cut = cost;
        cut.add(eta, -1.0);
        m.add_constraint(format!("cut[{k}]"), cut, ConstraintSense::Le, 0.0);
        blocks.push(op);
    }
    let mut obj = investment_cost_expr(case, &inv);
    obj.add(eta, 1.0);
    m.set_objective(ObjSense::Minimize, obj);
    Ok(MasterState {
        model: m,
        inv,
        w,
        eta,
        blocks,
    })
}

/// Dual subproblem for fixed first-stage decisions: worst-case operational
/// cost over the budgeted set, with both demand and PV treated robustly.
pub fn build_dsp(
    case: &CaseData,
    set: &BudgetedSet,
    x_hat: &InvestmentValues,
    w_hat: &[Vec<f64>],
) -> Result<DualSubproblem, EngineError> {
    Ok(attach_uncertainty(&primal_sub(case, set, x_hat, w_hat)?, set)?)
}

fn primal_sub(
    case: &CaseData,
    set: &BudgetedSet,
    x_hat: &InvestmentValues,
    w_hat: &[Vec<f64>],
) -> Result<PrimalSub, EngineError> {
    let ql = case.loads.nominal_ql(&case.probabilities);
    let price = case.costs.nominal_price(&case.probabilities);
    let blocks = [SubBlockSpec {
        pl: &set.pl_bar,
        ql: &ql,
        pv: &set.pv_bar,
        price: &price,
        weight: 1.0,
        w_hat,
        pv_uncertain: true,
        demand_uncertain: true,
    }];
    Ok(build_primal_sub(case, x_hat, &blocks)?)
}

/// Benders loop: alternate master and dual subproblem until the relative
/// gap closes or `max_iter` is hit.
pub fn solve_aro(
    case: &CaseData,
    set: &BudgetedSet,
    params: &SolverParams,
    tol: f64,
    max_iter: usize,
) -> Result<RobustSolution, EngineError> {
    if tol <= 0.0 {
        return Err(EngineError::InvalidArgument("tol must be positive".into()));
    }
    let mut recorded = vec![set.nominal()];
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut ub = f64::INFINITY;
    let mut best: Option<(InvestmentValues, Realization)> = None;
    let mut lb = f64::NEG_INFINITY;
    let mut converged = false;

    for iter in 1..=max_iter {
        let mp = build_master(case, &recorded)?;
        let mr = mp.model.solve(params)?;
        if mr.status != SolveStatus::Optimal {
            return Err(EngineError::NotOptimal(mr.status));
        }
        lb = mr.objective;
        let x_hat = mp.inv.values(&mr);
        let w_hat: Vec<Vec<f64>> = mp
            .w
            .iter()
            .map(|row| row.iter().map(|&v| mr.value(v).round()).collect())
            .collect();

        let dsp = build_dsp(case, set, &x_hat, &w_hat)?;
        let dr = dsp.model.solve(params)?;
        if dr.status != SolveStatus::Optimal {
            return Err(EngineError::NotOptimal(dr.status));
        }
        let theta = dr.objective;
        let u_star = crate::uncertainty::realize(set, &dsp.extract_point(&dr))
            .map_err(|e| EngineError::InvalidArgument(e.to_string()))?;

        let candidate = investment_cost(case, &x_hat) + theta;
        if candidate < ub {
            ub = candidate;
            best = Some((x_hat, u_star.clone()));
        }
        trace.push(IterationRecord {
            iter,
            lb,
            ub,
            mp_time: mr.solve_time,
            dsp_time: dr.solve_time,
            theta: vec![theta],
            u_star: u_star.clone(),
        });

        if ub - lb <= tol * (1.0 + ub.abs()) {
            converged = true;
            break;
        }
        if recorded.contains(&u_star) {
            // the adversary has no new answer; the remaining gap is noise
            break;
        }
        recorded.push(u_star);
    }

    let (investments, worst_case) = best.expect("at least one iteration ran");
    Ok(RobustSolution {
        investments,
        objective: ub,
        lower_bound: lb,
        upper_bound: ub,
        worst_case,
        iterations: trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deterministic::build_deterministic;
    use crate::testcases;
    use crate::uncertainty::{enumerate_extreme_points, realize};

    fn params() -> SolverParams {
        SolverParams::default()
    }

    #[test]
    fn single_block_master_is_deterministic() {
        let case = testcases::two_bus();
        let set = BudgetedSet::from_envelope(&case.envelope, 1, 1);
        let mp = build_master(&case, &[set.nominal()]).unwrap();
        let mr = mp.model.solve(&params()).unwrap();
        let det = build_deterministic(&case, &testcases::nominal(&case))
            .unwrap()
            .model
            .solve(&params())
            .unwrap();
        assert!((mr.objective - det.objective).abs() < 1e-6);
    }

    #[test]
    fn extra_blocks_never_cheapen_the_master() {
        let case = testcases::two_bus();
        let set = BudgetedSet::from_envelope(&case.envelope, 1, 1);
        let mut recorded = vec![set.nominal()];
        let base = build_master(&case, &recorded)
            .unwrap()
            .model
            .solve(&params())
            .unwrap()
            .objective;
        let mut bumped = set.nominal();
        bumped.pl[1][0] += set.pl_hat[1][0];
        recorded.push(bumped);
        let grown = build_master(&case, &recorded)
            .unwrap()
            .model
            .solve(&params())
            .unwrap()
            .objective;
        assert!(grown >= base - 1e-9);
    }

    #[test]
    fn duplicate_blocks_are_redundant() {
        let case = testcases::two_bus();
        let set = BudgetedSet::from_envelope(&case.envelope, 1, 1);
        let once = build_master(&case, &[set.nominal()])
            .unwrap()
            .model
            .solve(&params())
            .unwrap()
            .objective;
        let twice = build_master(&case, &[set.nominal(), set.nominal()])
            .unwrap()
            .model
            .solve(&params())
            .unwrap()
            .objective;
        assert!((once - twice).abs() < 1e-9);
    }

    #[test]
    fn zero_budget_collapses_to_deterministic() {
        let case = testcases::two_bus();
        let set = BudgetedSet::from_envelope(&case.envelope, 0, 0);
        let sol = solve_aro(&case, &set, &params(), 1e-6, 50).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations.len() <= 2, "{} iterations", sol.iterations.len());
        let det = build_deterministic(&case, &testcases::nominal(&case))
            .unwrap()
            .model
            .solve(&params())
            .unwrap();
        assert!((sol.objective - det.objective).abs() < 1e-6);
    }

    #[test]
    fn bounds_stay_ordered_and_lb_monotone() {
        let case = testcases::two_bus();
        let set = BudgetedSet::from_envelope(&case.envelope, 2, 2);
        let sol = solve_aro(&case, &set, &params(), 1e-6, 50).unwrap();
        assert!(sol.converged);
        let mut prev_lb = f64::NEG_INFINITY;
        for it in &sol.iterations {
            assert!(it.ub >= it.lb - 1e-6 * (1.0 + it.ub.abs()), "iter {}", it.iter);
            assert!(it.lb >= prev_lb - 1e-9);
            prev_lb = it.lb;
        }
    }

    /// Exact reference: the master problem with every extreme point
    /// recorded is the full robust counterpart.
    fn exhaustive_minmax(case: &CaseData, set: &BudgetedSet) -> f64 {
        let recorded: Vec<Realization> = enumerate_extreme_points(set, 10_000)
            .unwrap()
            .iter()
            .map(|ep| realize(set, ep).unwrap())
            .collect();
        build_master(case, &recorded)
            .unwrap()
            .model
            .solve(&params())
            .unwrap()
            .objective
    }

    #[test]
    fn matches_exhaustive_robust_counterpart_and_grows_with_budget() {
        let case = testcases::two_bus();
        let mut prev = f64::NEG_INFINITY;
        for beta in 0..=2 {
            let set = BudgetedSet::from_envelope(&case.envelope, beta, beta);
            let sol = solve_aro(&case, &set, &params(), 1e-6, 50).unwrap();
            let exact = exhaustive_minmax(&case, &set);
            assert!(
                (sol.objective - exact).abs() <= 1e-6 * (1.0 + exact.abs()),
                "beta={beta}: aro {} vs exact {}",
                sol.objective,
                exact
            );
            assert!(sol.objective >= prev - 1e-9);
            prev = sol.objective;
        }
    }

    #[test]
    fn battery_case_converges_with_commitments_in_master() {
        let case = testcases::two_bus_battery();
        let set = BudgetedSet::from_envelope(&case.envelope, 1, 0);
        let sol = solve_aro(&case, &set, &params(), 1e-6, 50).unwrap();
        assert!(sol.converged);
        let exact = exhaustive_minmax(&case, &set);
        assert!((sol.objective - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
    }
}
