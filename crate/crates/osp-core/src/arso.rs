//! Adaptive robust-stochastic optimization: demand is handled by a budgeted
//! uncertainty set shared across all PV scenarios, while PV enters as
//! discrete scenario data. Solved by multi-cut Benders decomposition: the
//! master carries per-scenario cut variables and per-(realization, scenario)
//! operational blocks, and a single joint dual subproblem searches for the
//! scenario-shared worst demand trajectory.

use crate::aro::{IterationRecord, RobustSolution};
use crate::baselines::EngineError;
use crate::deterministic::{
    BlockData, InvestmentValues, InvestmentVars, OperationVars, add_investment,
    add_operational_block, investment_cost, investment_cost_expr,
};
use crate::milp::{
    ConstraintSense, LinExpr, LinearModel, ObjSense, SolveStatus, SolverParams, VarId,
};
use crate::model::CaseData;
use crate::subproblem::{DualSubproblem, SubBlockSpec, attach_uncertainty, build_primal_sub};
use crate::uncertainty::{BudgetedSet, Realization, ScenarioSet, realize};

/// Multi-cut master handles: one commitment grid and one cut variable per
/// scenario, one operational block per (recorded realization, scenario).
pub struct MultiCutMasterState {
    pub model: LinearModel,
    pub inv: InvestmentVars,
    /// Battery-commitment binaries `[scenario][bus][slot]`.
    pub w: Vec<Vec<Vec<VarId>>>,
    pub eta: Vec<VarId>,
    pub blocks: Vec<Vec<OperationVars>>,
}

fn scenario_slice(m: &[Vec<Vec<f64>>], s: usize) -> Vec<Vec<f64>> {
    m.iter()
        .map(|bus| bus.iter().map(|row| row[s]).collect())
        .collect()
}

fn column(m: &[Vec<f64>], s: usize) -> Vec<f64> {
    m.iter().map(|row| row[s]).collect()
}

/// Master problem: investments shared by all scenarios, scenario-indexed
/// battery commitments, and for every scenario a cut variable bounding the
/// probability-weighted operational cost of each recorded realization.
pub fn build_multicut_master(
    case: &CaseData,
    scenarios: &ScenarioSet,
    recorded: &[Realization],
) -> Result<MultiCutMasterState, EngineError> {
    if recorded.is_empty() {
        return Err(EngineError::InvalidArgument(
            "master needs at least one recorded realization".into(),
        ));
    }
    let ns = scenarios.n_scenarios();
    if ns == 0 {
        return Err(EngineError::InvalidArgument("no scenarios".into()));
    }
    let nb = case.n_buses();
    let nt = case.horizon;
    let mut m = LinearModel::new();
    let inv = add_investment(&mut m, case);
    let mut w = Vec::with_capacity(ns);
    for s in 0..ns {
        let grid: Vec<Vec<VarId>> = (0..nb)
            .map(|i| {
                (0..nt)
                    .map(|t| m.add_binary(format!("w[{i},{t},{s}]")))
                    .collect()
            })
            .collect();
        for i in 0..nb {
            for t in 0..nt {
                let mut gate = LinExpr::term(grid[i][t], 1.0);
                gate.add(inv.nu_bt[i], -1.0);
                m.add_constraint(
                    format!("w_gate[{i},{t},{s}]"),
                    gate,
                    ConstraintSense::Le,
                    0.0,
                );
            }
        }
        w.push(grid);
    }
    let eta: Vec<VarId> = (0..ns)
        .map(|s| m.add_continuous(format!("eta[{s}]"), 0.0, f64::INFINITY))
        .collect();

    let mut blocks = Vec::with_capacity(recorded.len());
    for (k, u) in recorded.iter().enumerate() {
        let mut per_scen = Vec::with_capacity(ns);
        for s in 0..ns {
            let ql = scenario_slice(&scenarios.ql, s);
            let pv = column(&scenarios.pv, s);
            let price = column(&scenarios.prices, s);
            let data = BlockData {
                pl: &u.pl,
                ql: &ql,
                pv: &pv,
                price: &price,
                weight: scenarios.probabilities[s],
            };
            let (op, cost) =
                add_operational_block(&mut m, case, &inv, Some(&w[s]), &data, &format!("r{k}s{s}:"))?;
            let mut cut = cost;
            cut.add(eta[s], -1.0);
            m.add_constraint(format!("cut[{k},{s}]"), cut, ConstraintSense::Le, 0.0);
            per_scen.push(op);
        }
        blocks.push(per_scen);
    }
    let mut obj = investment_cost_expr(case, &inv);
    for &e in &eta {
        obj.add(e, 1.0);
    }
    m.set_objective(ObjSense::Minimize, obj);
    Ok(MultiCutMasterState {
        model: m,
        inv,
        w,
        eta,
        blocks,
    })
}

/// Joint dual subproblem over all scenarios: probability-weighted dual
/// blocks per scenario, one shared set of demand deviation binaries, and
/// scenario-indexed Big-M auxiliaries. PV availability is fixed scenario
/// data, so the set's PV hats never enter the objective.
pub fn build_arso_dsp(
    case: &CaseData,
    scenarios: &ScenarioSet,
    set: &BudgetedSet,
    x_hat: &InvestmentValues,
    w_hat: &[Vec<Vec<f64>>],
) -> Result<DualSubproblem, EngineError> {
    let ns = scenarios.n_scenarios();
    if w_hat.len() != ns {
        return Err(EngineError::InvalidArgument(format!(
            "expected {ns} commitment grids, got {}",
            w_hat.len()
        )));
    }
    let ql: Vec<Vec<Vec<f64>>> = (0..ns).map(|s| scenario_slice(&scenarios.ql, s)).collect();
    let pv: Vec<Vec<f64>> = (0..ns).map(|s| column(&scenarios.pv, s)).collect();
    let price: Vec<Vec<f64>> = (0..ns).map(|s| column(&scenarios.prices, s)).collect();
    let blocks: Vec<SubBlockSpec> = (0..ns)
        .map(|s| SubBlockSpec {
            pl: &set.pl_bar,
            ql: &ql[s],
            pv: &pv[s],
            price: &price[s],
            weight: scenarios.probabilities[s],
            w_hat: &w_hat[s],
            pv_uncertain: false,
            demand_uncertain: true,
        })
        .collect();
    let primal = build_primal_sub(case, x_hat, &blocks)?;
    Ok(attach_uncertainty(&primal, set)?)
}

/// Operational cost of scenario `s` under demand trajectory `u` for fixed
/// first-stage decisions (unweighted; one primal LP).
fn scenario_cost(
    case: &CaseData,
    scenarios: &ScenarioSet,
    s: usize,
    u: &Realization,
    x_hat: &InvestmentValues,
    w_hat: &[Vec<f64>],
    params: &SolverParams,
) -> Result<f64, EngineError> {
    let ql = scenario_slice(&scenarios.ql, s);
    let pv = column(&scenarios.pv, s);
    let price = column(&scenarios.prices, s);
    let block = SubBlockSpec {
        pl: &u.pl,
        ql: &ql,
        pv: &pv,
        price: &price,
        weight: 1.0,
        w_hat,
        pv_uncertain: false,
        demand_uncertain: false,
    };
    let primal = build_primal_sub(case, x_hat, std::slice::from_ref(&block))?;
    let r = primal.model.solve(params)?;
    if r.status != SolveStatus::Optimal {
        return Err(EngineError::NotOptimal(r.status));
    }
    Ok(r.objective)
}

/// Multi-cut Benders loop: alternate the multi-cut master and the joint
/// dual subproblem until the relative gap closes or `max_iter` is hit.
pub fn solve_arso(
    case: &CaseData,
    scenarios: &ScenarioSet,
    set: &BudgetedSet,
    params: &SolverParams,
    tol: f64,
    max_iter: usize,
) -> Result<RobustSolution, EngineError> {
    if tol <= 0.0 {
        return Err(EngineError::InvalidArgument("tol must be positive".into()));
    }
    let ns = scenarios.n_scenarios();
    let mut recorded = vec![set.nominal()];
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut ub = f64::INFINITY;
    let mut best: Option<(InvestmentValues, Realization)> = None;
    let mut lb = f64::NEG_INFINITY;
    let mut converged = false;

    for iter in 1..=max_iter {
        let mp = build_multicut_master(case, scenarios, &recorded)?;
        let mr = mp.model.solve(params)?;
        if mr.status != SolveStatus::Optimal {
            return Err(EngineError::NotOptimal(mr.status));
        }
        lb = mr.objective;
        let x_hat = mp.inv.values(&mr);
        let w_hat: Vec<Vec<Vec<f64>>> = mp
            .w
            .iter()
            .map(|grid| {
                grid.iter()
                    .map(|row| row.iter().map(|&v| mr.value(v).round()).collect())
                    .collect()
            })
            .collect();

        let dsp = build_arso_dsp(case, scenarios, set, &x_hat, &w_hat)?;
        let dr = dsp.model.solve(params)?;
        if dr.status != SolveStatus::Optimal {
            return Err(EngineError::NotOptimal(dr.status));
        }
        let u_star = realize(set, &dsp.extract_point(&dr))
            .map_err(|e| EngineError::InvalidArgument(e.to_string()))?;

        let mut theta = Vec::with_capacity(ns);
        for s in 0..ns {
            let cost = scenario_cost(case, scenarios, s, &u_star, &x_hat, &w_hat[s], params)?;
            theta.push(scenarios.probabilities[s] * cost);
        }
        let candidate = investment_cost(case, &x_hat) + theta.iter().sum::<f64>();
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
            theta,
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
