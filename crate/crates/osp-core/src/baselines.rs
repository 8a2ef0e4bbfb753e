//! Two-stage stochastic baseline (extensive form over discrete scenarios)
//! and the single-stage robust conservative bound.
//!
//! The single-stage robust model is implemented as a deterministic solve at
//! a budget-feasible worst realization chosen up front. A literal min-max
//! with all operational decisions fixed before uncertainty is revealed is
//! infeasible under uncertain demand equalities, so this conservative proxy
//! is used as the upper-bound reference, and its slot-selection heuristic is
//! documented on [`worst_realization`].

use thiserror::Error;

use crate::deterministic::{
    BlockData, BuildError, InvestmentValues, InvestmentVars, OperationValues, OperationVars,
    add_investment, add_operational_block, build_deterministic, investment_cost,
    investment_cost_expr, operational_cost,
};
use crate::milp::{LinearModel, ObjSense, SolveError, SolveStatus, SolverParams};
use crate::model::CaseData;
use crate::uncertainty::{BudgetedSet, Realization, ScenarioSet};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("model terminated with status {0:?}")]
    NotOptimal(SolveStatus),
    #[error(transparent)]
    Uncertainty(#[from] crate::uncertainty::UncertaintyError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// First-stage plan with per-scenario operations and the cost split.
#[derive(Debug, Clone)]
pub struct StochasticSolution {
    pub investments: InvestmentValues,
    pub operations: Vec<OperationValues>,
    pub investment_cost: f64,
    pub expected_operational_cost: f64,
    pub objective: f64,
}

pub struct TssoModel {
    pub model: LinearModel,
    pub inv: InvestmentVars,
    pub ops: Vec<OperationVars>,
}

fn scenario_slice(m: &[Vec<Vec<f64>>], s: usize) -> Vec<Vec<f64>> {
    m.iter()
        .map(|bus| bus.iter().map(|row| row[s]).collect())
        .collect()
}

fn column(m: &[Vec<f64>], s: usize) -> Vec<f64> {
    m.iter().map(|row| row[s]).collect()
}

/// Extensive-form two-stage stochastic MILP: shared investments, one
/// operational block per scenario, expectation-weighted operational cost.
pub fn build_tsso(case: &CaseData, scenarios: &ScenarioSet) -> Result<TssoModel, EngineError> {
    let ns = scenarios.n_scenarios();
    if ns == 0 {
        return Err(EngineError::InvalidArgument("empty scenario set".into()));
    }
    let mut m = LinearModel::new();
    let inv = add_investment(&mut m, case);
    let mut obj = investment_cost_expr(case, &inv);
    let mut ops = Vec::with_capacity(ns);
    for s in 0..ns {
        let pl = scenario_slice(&scenarios.pl, s);
        let ql = scenario_slice(&scenarios.ql, s);
        let pv = column(&scenarios.pv, s);
        let price = column(&scenarios.prices, s);
        let data = BlockData {
            pl: &pl,
            ql: &ql,
            pv: &pv,
            price: &price,
            weight: scenarios.probabilities[s],
        };
        let (op, cost) = add_operational_block(&mut m, case, &inv, None, &data, &format!("s{s}:"))?;
        obj.extend(&cost);
        ops.push(op);
    }
    m.set_objective(ObjSense::Minimize, obj);
    Ok(TssoModel { model: m, inv, ops })
}

pub fn solve_tsso(
    case: &CaseData,
    scenarios: &ScenarioSet,
    params: &SolverParams,
) -> Result<StochasticSolution, EngineError> {
    let tm = build_tsso(case, scenarios)?;
    let r = tm.model.solve(params)?;
    if r.status != SolveStatus::Optimal {
        return Err(EngineError::NotOptimal(r.status));
    }
    let investments = tm.inv.values(&r);
    let operations: Vec<_> = tm.ops.iter().map(|op| op.values(&r)).collect();
    let inv_cost = investment_cost(case, &investments);
    let exp_op: f64 = operations
        .iter()
        .enumerate()
        .map(|(s, op)| {
            scenarios.probabilities[s] * operational_cost(case, op, &column(&scenarios.prices, s))
        })
        .sum();
    Ok(StochasticSolution {
        investments,
        operations,
        investment_cost: inv_cost,
        expected_operational_cost: exp_op,
        objective: r.objective,
    })
}

/// The budget-feasible realization used by the single-stage robust proxy:
/// per bus, demand is raised by its full deviation in the `beta_pl` slots
/// with the largest `hat * price`; PV is lowered by its full deviation in
/// the `beta_pv` slots with the largest expected availability. Ties break
/// toward earlier slots.
pub fn worst_realization(case: &CaseData, set: &BudgetedSet) -> Realization {
    let nt = set.horizon();
    let price = case.costs.nominal_price(&case.probabilities);
    let top_slots = |score: &dyn Fn(usize) -> f64, budget: usize| -> Vec<usize> {
        let mut slots: Vec<usize> = (0..nt).filter(|&t| score(t) > 0.0).collect();
        slots.sort_by(|&a, &b| score(b).partial_cmp(&score(a)).unwrap().then(a.cmp(&b)));
        slots.truncate(budget);
        slots
    };

    let mut pl = set.pl_bar.clone();
    for (i, bus_pl) in pl.iter_mut().enumerate() {
        let score = |t: usize| set.pl_hat[i][t] * price[t];
        for t in top_slots(&score, set.beta_pl) {
            bus_pl[t] += set.pl_hat[i][t];
        }
    }
    let mut pv = set.pv_bar.clone();
    let score = |t: usize| {
        if set.pv_hat[t] > 0.0 {
            set.pv_bar[t]
        } else {
            0.0
        }
    };
    for t in top_slots(&score, set.beta_pv) {
        pv[t] -= set.pv_hat[t];
    }
    Realization { pv, pl }
}

/// Conservative single-stage bound: all decisions committed against the
/// heuristic worst realization. The objective upper-bounds the adaptive
/// robust optimum for the same budgeted set.
pub fn solve_sro(
    case: &CaseData,
    set: &BudgetedSet,
    params: &SolverParams,
) -> Result<StochasticSolution, EngineError> {
    let u = worst_realization(case, set);
    let dm = build_deterministic(case, &u)?;
    let r = dm.model.solve(params)?;
    if r.status != SolveStatus::Optimal {
        return Err(EngineError::NotOptimal(r.status));
    }
    let investments = dm.inv.values(&r);
    let op = dm.op.values(&r);
    let inv_cost = investment_cost(case, &investments);
    let price = case.costs.nominal_price(&case.probabilities);
    let op_cost = operational_cost(case, &op, &price);
    Ok(StochasticSolution {
        investments,
        operations: vec![op],
        investment_cost: inv_cost,
        expected_operational_cost: op_cost,
        objective: r.objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testcases;

    fn params() -> SolverParams {
        SolverParams::default()
    }

    #[test]
    fn single_scenario_equals_deterministic() {
        let case = testcases::two_bus();
        let scen = ScenarioSet::from_case(&case);
        let tsso = solve_tsso(&case, &scen, &params()).unwrap();
        let dm = build_deterministic(&case, &testcases::nominal(&case)).unwrap();
        let det = dm.model.solve(&params()).unwrap();
        assert!((tsso.objective - det.objective).abs() < 1e-6);
    }

    #[test]
    fn duplicated_scenarios_change_nothing() {
        let mut case = testcases::two_bus();
        // duplicate the single scenario at half probability each
        case.probabilities = vec![0.5, 0.5];
        for bus in case.loads.pl.iter_mut().chain(case.loads.ql.iter_mut()) {
            for row in bus.iter_mut() {
                row.push(row[0]);
            }
        }
        for row in case.pv_profile.pv.iter_mut().chain(case.costs.price.iter_mut()) {
            row.push(row[0]);
        }
        let doubled = solve_tsso(&case, &ScenarioSet::from_case(&case), &params()).unwrap();
        let single = solve_tsso(
            &testcases::two_bus(),
            &ScenarioSet::from_case(&testcases::two_bus()),
            &params(),
        )
        .unwrap();
        assert!((doubled.objective - single.objective).abs() < 1e-6);
    }

    fn pv_or_not_case() -> CaseData {
        // scenario 0 has the usual sunny first slot, scenario 1 no sun at
        // all; cheap PV so that installing pays off only in expectation
        let mut case = testcases::two_bus();
        case.probabilities = vec![0.5, 0.5];
        for bus in case.loads.pl.iter_mut().chain(case.loads.ql.iter_mut()) {
            for row in bus.iter_mut() {
                row.push(row[0]);
            }
        }
        for row in case.costs.price.iter_mut() {
            row.push(row[0]);
        }
        case.pv_profile.pv = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        case.costs.c_pv = vec![0.2, 0.2];
        case
    }

    #[test]
    fn expected_cost_between_scenario_optima() {
        let case = pv_or_not_case();
        let scen = ScenarioSet::from_case(&case);
        let tsso = solve_tsso(&case, &scen, &params()).unwrap();

        let mut sunny = case.clone();
        sunny.probabilities = vec![1.0];
        let drop_col = |m: &mut Vec<Vec<Vec<f64>>>| {
            for bus in m.iter_mut() {
                for row in bus.iter_mut() {
                    row.truncate(1);
                }
            }
        };
        drop_col(&mut sunny.loads.pl);
        drop_col(&mut sunny.loads.ql);
        for row in sunny.pv_profile.pv.iter_mut().chain(sunny.costs.price.iter_mut()) {
            row.truncate(1);
        }
        let mut dark = sunny.clone();
        dark.pv_profile.pv = vec![vec![0.0], vec![0.0]];
        let lo = solve_tsso(&sunny, &ScenarioSet::from_case(&sunny), &params()).unwrap();
        let hi = solve_tsso(&dark, &ScenarioSet::from_case(&dark), &params()).unwrap();
        assert!(
            lo.objective + 1e-6 < tsso.objective && tsso.objective < hi.objective - 1e-6,
            "{} < {} < {} violated",
            lo.objective,
            tsso.objective,
            hi.objective
        );
    }

    #[test]
    fn objective_matches_cost_split() {
        let case = pv_or_not_case();
        let tsso = solve_tsso(&case, &ScenarioSet::from_case(&case), &params()).unwrap();
        assert!(
            (tsso.objective - tsso.investment_cost - tsso.expected_operational_cost).abs() < 1e-6
        );
    }

    #[test]
    fn empty_scenario_set_rejected() {
        let case = testcases::two_bus();
        let scen = ScenarioSet {
            probabilities: vec![],
            pv: vec![],
            pl: vec![],
            ql: vec![],
            prices: vec![],
        };
        assert!(matches!(
            build_tsso(&case, &scen),
            Err(EngineError::InvalidArgument(_))
        ));
    }

    #[test]
    fn zero_budget_sro_is_nominal_deterministic() {
        let case = testcases::two_bus();
        let set = BudgetedSet::from_envelope(&case.envelope, 0, 0);
        let sro = solve_sro(&case, &set, &params()).unwrap();
        let dm = build_deterministic(&case, &testcases::nominal(&case)).unwrap();
        let det = dm.model.solve(&params()).unwrap();
        assert!((sro.objective - det.objective).abs() < 1e-6);
    }

    #[test]
    fn positive_budget_never_cheaper() {
        let case = testcases::two_bus();
        let tight = solve_sro(
            &case,
            &BudgetedSet::from_envelope(&case.envelope, 0, 0),
            &params(),
        )
        .unwrap();
        let loose = solve_sro(
            &case,
            &BudgetedSet::from_envelope(&case.envelope, 2, 2),
            &params(),
        )
        .unwrap();
        assert!(loose.objective >= tight.objective - 1e-9);
    }

    #[test]
    fn worst_realization_spends_the_budget() {
        let case = testcases::two_bus();
        let set = BudgetedSet::from_envelope(&case.envelope, 1, 1);
        let u = worst_realization(&case, &set);
        assert!(u.is_member(&set, 1e-9));
        // bus 1 has positive hats: exactly one slot raised by its hat
        let raised: Vec<usize> = (0..case.horizon)
            .filter(|&t| u.pl[1][t] > set.pl_bar[1][t] + 1e-12)
            .collect();
        assert_eq!(raised.len(), 1);
        assert!((u.pl[1][raised[0]] - set.pl_bar[1][raised[0]] - set.pl_hat[1][raised[0]]).abs() < 1e-12);
    }
}
