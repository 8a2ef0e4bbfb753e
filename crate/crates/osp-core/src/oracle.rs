//! Independent brute-force verification tools: worst-case enumeration over
//! the extreme points of the budgeted set, the perfect-information
//! benchmark on the concatenated scenario horizon, and autonomy-curve
//! computation.

use rayon::prelude::*;

use crate::baselines::EngineError;
use crate::deterministic::{InvestmentValues, OperationValues, build_deterministic,
    investment_cost, operational_cost};
use crate::milp::{ConstraintSense, LinExpr, SolveStatus, SolverParams};
use crate::model::{CaseData, Envelope, LoadProfile, PvProfile};
use crate::subproblem::{SubBlockSpec, build_primal_sub};
use crate::uncertainty::{BudgetedSet, ExtremePoint, Realization, ScenarioSet,
    enumerate_extreme_points, realize};

/// Worst-case operational cost over every extreme point of the set, solved
/// by exhaustive primal LPs with the first-stage decisions fixed. This is
/// the reference the dual subproblems are checked against.
///
/// Ties are broken toward the lexicographically smallest deviation
/// pattern, so the result is deterministic even under parallel evaluation.
pub fn brute_force_worst_case(
    case: &CaseData,
    set: &BudgetedSet,
    x_hat: &InvestmentValues,
    w_hat: &[Vec<f64>],
    params: &SolverParams,
    limit: usize,
) -> Result<(Realization, f64), EngineError> {
    let points = enumerate_extreme_points(set, limit)?;
    let ql = case.loads.nominal_ql(&case.probabilities);
    let price = case.costs.nominal_price(&case.probabilities);
    let values: Vec<Result<f64, EngineError>> = points
        .par_iter()
        .map(|ep| {
            let u = realize(set, ep)?;
            let block = SubBlockSpec {
                pl: &u.pl,
                ql: &ql,
                pv: &u.pv,
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
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.into_iter().enumerate() {
        let v = v?;
        let better = match best {
            None => true,
            Some((bk, bv)) => v > bv || (v == bv && pattern_key(&points[k]) < pattern_key(&points[bk])),
        };
        if better {
            best = Some((k, v));
        }
    }
    let (k, value) = best.expect("enumeration yields at least the nominal point");
    Ok((realize(set, &points[k])?, value))
}

fn pattern_key(ep: &ExtremePoint) -> Vec<bool> {
    let mut key = Vec::new();
    key.extend(&ep.u_plus);
    key.extend(&ep.u_minus);
    for row in &ep.v_plus {
        key.extend(row);
    }
    for row in &ep.v_minus {
        key.extend(row);
    }
    key
}

/// Perfect-information solve and its plan.
#[derive(Debug, Clone)]
pub struct PiSolution {
    pub investments: InvestmentValues,
    pub operations: OperationValues,
    pub investment_cost: f64,
    pub operational_cost: f64,
    pub objective: f64,
}

/// Single deterministic case over the concatenated horizon of
/// `|S| * horizon` slots, with the scenarios laid end to end in order and
/// the state of charge chaining continuously across the seams. Returns the
/// case together with its (now certain) realization.
pub fn concatenated_case(case: &CaseData, scenarios: &ScenarioSet) -> (CaseData, Realization) {
    let ns = scenarios.n_scenarios();
    let nt = case.horizon;
    let nb = case.n_buses();
    let total = ns * nt;
    let mut pv = Vec::with_capacity(total);
    let mut price = Vec::with_capacity(total);
    let mut pl = vec![Vec::with_capacity(total); nb];
    let mut ql = vec![Vec::with_capacity(total); nb];
    for s in 0..ns {
        for t in 0..nt {
            pv.push(scenarios.pv[t][s]);
            price.push(scenarios.prices[t][s]);
            for i in 0..nb {
                pl[i].push(scenarios.pl[i][t][s]);
                ql[i].push(scenarios.ql[i][t][s]);
            }
        }
    }
    let mut concat = case.clone();
    concat.name = format!("{}-pi", case.name);
    concat.horizon = total;
    concat.probabilities = vec![1.0];
    concat.costs.price = price.iter().map(|&p| vec![p]).collect();
    concat.loads = LoadProfile {
        pl: pl.iter().map(|row| row.iter().map(|&x| vec![x]).collect()).collect(),
        ql: ql.iter().map(|row| row.iter().map(|&x| vec![x]).collect()).collect(),
    };
    concat.pv_profile = PvProfile {
        pv: pv.iter().map(|&x| vec![x]).collect(),
    };
    concat.envelope = Envelope {
        pv_bar: pv.clone(),
        pv_hat: vec![0.0; total],
        pl_bar: pl.clone(),
        pl_hat: vec![vec![0.0; total]; nb],
    };
    (concat, Realization { pv, pl })
}

/// Deterministic solve with the full future known: one model over the
/// concatenated scenario horizon. Lower-bounds the realized cost of every
/// formulation's plan on that same horizon.
pub fn perfect_information_benchmark(
    case: &CaseData,
    scenarios: &ScenarioSet,
    params: &SolverParams,
) -> Result<PiSolution, EngineError> {
    let (concat, u) = concatenated_case(case, scenarios);
    let det = build_deterministic(&concat, &u)?;
    let r = det.model.solve(params)?;
    if r.status != SolveStatus::Optimal {
        return Err(EngineError::NotOptimal(r.status));
    }
    let investments = det.inv.values(&r);
    let operations = det.op.values(&r);
    let ci = investment_cost(&concat, &investments);
    let price = concat.costs.nominal_price(&concat.probabilities);
    let co = operational_cost(&concat, &operations, &price);
    Ok(PiSolution {
        investments,
        operations,
        investment_cost: ci,
        operational_cost: co,
        objective: r.objective,
    })
}

/// Realized total cost of a fixed investment plan on the concatenated
/// scenario horizon: operations re-optimized with the investments pinned.
pub fn evaluate_plan(
    case: &CaseData,
    scenarios: &ScenarioSet,
    plan: &InvestmentValues,
    params: &SolverParams,
) -> Result<PiSolution, EngineError> {
    let (concat, u) = concatenated_case(case, scenarios);
    let det = build_deterministic(&concat, &u)?;
    let mut pins = Vec::new();
    for i in 0..concat.n_buses() {
        // indicator values may carry solver round-off; pin them to exact
        // binaries
        pins.push((det.inv.nu_pv[i], plan.nu_pv[i].round()));
        pins.push((det.inv.nu_bt[i], plan.nu_bt[i].round()));
        pins.push((det.inv.gamma_pv[i], plan.gamma_pv[i].max(0.0)));
        pins.push((det.inv.gamma_bt[i], plan.gamma_bt[i].max(0.0)));
    }
    let fixed = det
        .model
        .fix_variables(&pins)
        .map_err(crate::milp::SolveError::from)?;
    let r = fixed.solve(params)?;
    if r.status != SolveStatus::Optimal {
        return Err(EngineError::NotOptimal(r.status));
    }
    let operations = det.op.values(&r);
    let ci = investment_cost(&concat, plan);
    let price = concat.costs.nominal_price(&concat.probabilities);
    let co = operational_cost(&concat, &operations, &price);
    Ok(PiSolution {
        investments: plan.clone(),
        operations,
        investment_cost: ci,
        operational_cost: co,
        objective: r.objective,
    })
}

/// One point of the autonomy curve.
#[derive(Debug, Clone)]
pub struct AutonomyPoint {
    /// Demanded autonomy level in `[0, 1]`.
    pub level: f64,
    pub feasible: bool,
    pub investment_cost: f64,
    pub objective: f64,
    /// Achieved autonomy `1 - Σ pg / Σ PL` at the optimum (equals at least
    /// `level` when feasible).
    pub achieved: f64,
}

/// Sweeps forced autonomy levels on the concatenated horizon: for each
/// level α the deterministic model gains the constraint
/// `Σ pg ≤ (1 - α)·Σ PL`. Infeasible levels are reported as such rather
/// than failing the sweep.
pub fn autonomy_curve(
    case: &CaseData,
    scenarios: &ScenarioSet,
    levels: &[f64],
    params: &SolverParams,
) -> Result<Vec<AutonomyPoint>, EngineError> {
    if levels.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
        return Err(EngineError::InvalidArgument(
            "autonomy levels must lie in [0, 1]".into(),
        ));
    }
    let (concat, u) = concatenated_case(case, scenarios);
    let total_demand: f64 = u.pl.iter().flatten().sum();
    let mut out = Vec::with_capacity(levels.len());
    for &alpha in levels {
        let mut det = build_deterministic(&concat, &u)?;
        let imports: LinExpr = det
            .op
            .pg
            .iter()
            .flatten()
            .map(|&v| (v, 1.0))
            .collect();
        det.model.add_constraint(
            "autonomy",
            imports,
            ConstraintSense::Le,
            (1.0 - alpha) * total_demand,
        );
        let r = det.model.solve(params)?;
        match r.status {
            SolveStatus::Optimal => {
                let investments = det.inv.values(&r);
                let operations = det.op.values(&r);
                let imported: f64 = operations.pg.iter().flatten().sum();
                out.push(AutonomyPoint {
                    level: alpha,
                    feasible: true,
                    investment_cost: investment_cost(&concat, &investments),
                    objective: r.objective,
                    achieved: if total_demand > 0.0 {
                        1.0 - imported / total_demand
                    } else {
                        1.0
                    },
                });
            }
            SolveStatus::Infeasible => out.push(AutonomyPoint {
                level: alpha,
                feasible: false,
                investment_cost: f64::NAN,
                objective: f64::NAN,
                achieved: f64::NAN,
            }),
            other => return Err(EngineError::NotOptimal(other)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aro::build_dsp;
    use crate::testcases;

    fn params() -> SolverParams {
        SolverParams::default()
    }

    fn idle_plan(case: &CaseData) -> (InvestmentValues, Vec<Vec<f64>>) {
        let nb = case.n_buses();
        (
            InvestmentValues {
                nu_pv: vec![0.0; nb],
                nu_bt: vec![0.0; nb],
                gamma_pv: vec![0.0; nb],
                gamma_bt: vec![0.0; nb],
            },
            vec![vec![0.0; case.horizon]; nb],
        )
    }

    #[test]
    fn zero_budget_returns_nominal() {
        let case = testcases::two_bus();
        let set = BudgetedSet::from_envelope(&case.envelope, 0, 0);
        let (x, w) = idle_plan(&case);
        let (u, _) = brute_force_worst_case(&case, &set, &x, &w, &params(), 1000).unwrap();
        assert_eq!(u, set.nominal());
    }

    #[test]
    fn agrees_with_dual_subproblem() {
        let case = testcases::two_bus();
        let set = BudgetedSet::from_envelope(&case.envelope, 2, 1);
        let (x, w) = idle_plan(&case);
        let (_, value) = brute_force_worst_case(&case, &set, &x, &w, &params(), 1000).unwrap();
        let dsp = build_dsp(&case, &set, &x, &w).unwrap();
        let opt = dsp.model.solve(&params()).unwrap().objective;
        assert!((value - opt).abs() <= 1e-6 * (1.0 + opt.abs()), "{value} vs {opt}");
    }

    #[test]
    fn worst_case_raises_demand_with_nonnegative_prices() {
        let case = testcases::two_bus();
        let set = BudgetedSet::from_envelope(&case.envelope, 1, 0);
        let (x, w) = idle_plan(&case);
        let (u, _) = brute_force_worst_case(&case, &set, &x, &w, &params(), 1000).unwrap();
        for (i, bus) in u.pl.iter().enumerate() {
            for (t, &d) in bus.iter().enumerate() {
                assert!(d >= set.pl_bar[i][t] - 1e-12, "demand lowered at [{i},{t}]");
            }
        }
    }

    #[test]
    fn single_scenario_pi_is_deterministic() {
        let case = testcases::two_bus();
        let scen = ScenarioSet::from_case(&case);
        let pi = perfect_information_benchmark(&case, &scen, &params()).unwrap();
        let det = build_deterministic(&case, &testcases::nominal(&case))
            .unwrap()
            .model
            .solve(&params())
            .unwrap();
        assert!((pi.objective - det.objective).abs() < 1e-6);
        assert!((pi.investment_cost + pi.operational_cost - pi.objective).abs() < 1e-6);
    }

    #[test]
    fn pi_lower_bounds_any_fixed_plan() {
        let case = testcases::two_bus_two_scen();
        let scen = ScenarioSet::from_case(&case);
        let pi = perfect_information_benchmark(&case, &scen, &params()).unwrap();
        let (idle, _) = idle_plan(&case);
        let realized = evaluate_plan(&case, &scen, &idle, &params()).unwrap();
        assert!(pi.objective <= realized.objective + 1e-6);
        let realized_pi = evaluate_plan(&case, &scen, &pi.investments, &params()).unwrap();
        assert!((realized_pi.objective - pi.objective).abs() < 1e-6);
    }

    #[test]
    fn autonomy_costs_are_monotone() {
        let case = testcases::two_bus();
        let scen = ScenarioSet::from_case(&case);
        let levels = [0.0, 0.1, 0.3, 0.5];
        let curve = autonomy_curve(&case, &scen, &levels, &params()).unwrap();
        let base = build_deterministic(&case, &testcases::nominal(&case))
            .unwrap()
            .model
            .solve(&params())
            .unwrap();
        assert!(curve[0].feasible);
        assert!((curve[0].objective - base.objective).abs() < 1e-6);
        let mut prev = f64::NEG_INFINITY;
        for pt in &curve {
            assert!(pt.feasible, "level {} infeasible", pt.level);
            assert!(pt.achieved >= pt.level - 1e-6);
            assert!(pt.objective >= prev - 1e-9);
            prev = pt.objective;
        }
    }

    #[test]
    fn full_autonomy_without_resources_is_infeasible() {
        let case = testcases::two_bus_battery();
        // no PV resource anywhere and batteries start empty: imports are
        // unavoidable, so full autonomy cannot be met
        let scen = ScenarioSet::from_case(&case);
        let curve = autonomy_curve(&case, &scen, &[1.0], &params()).unwrap();
        assert!(!curve[0].feasible);
    }
}
