//! Benders subproblem machinery: the operational LP for fixed investments
//! and battery commitments (one weighted block per scenario), annotations of
//! the rows whose right-hand sides carry uncertain parameters, and the
//! assembly of the dual subproblem — mechanical dualization plus
//! extreme-point binaries, budget rows, and the Big-M linearization of the
//! dual bilinearities.

use crate::deterministic::{BuildError, InvestmentValues};
use crate::milp::{
    ConId, ConstraintSense, LinExpr, LinearModel, ObjSense, SolveResult, VarId, VarKind,
};
use crate::model::CaseData;
use crate::uncertainty::{BudgetedSet, ExtremePoint};

/// Which uncertain parameter a tagged row's right-hand side depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UncertainParam {
    Demand { bus: usize, slot: usize },
    Pv { slot: usize },
}

/// A primal row whose rhs is `base + coeff * (deviation of param)`.
#[derive(Debug, Clone, Copy)]
pub struct RhsTag {
    pub row: ConId,
    pub param: UncertainParam,
    pub coeff: f64,
}

/// Exogenous data of one subproblem block (one scenario).
pub struct SubBlockSpec<'a> {
    /// Expected active demand `[bus][slot]`.
    pub pl: &'a [Vec<f64>],
    pub ql: &'a [Vec<f64>],
    /// PV availability per slot: the expected profile when PV is treated
    /// robustly, or this scenario's profile when PV is scenario data.
    pub pv: &'a [f64],
    pub price: &'a [f64],
    /// Probability weight on this block's cost.
    pub weight: f64,
    /// Fixed battery commitment `[bus][slot]`.
    pub w_hat: &'a [Vec<f64>],
    /// Tag the PV capacity rows for budgeted treatment.
    pub pv_uncertain: bool,
    /// Tag the active-balance rows for budgeted treatment.
    pub demand_uncertain: bool,
}

/// Variable handles of one primal block.
#[derive(Debug, Clone)]
pub struct SubVars {
    pub pg: Vec<Vec<VarId>>,
    pub qg: Vec<Vec<VarId>>,
    pub pv: Vec<Vec<VarId>>,
    pub ch: Vec<Vec<VarId>>,
    pub ds: Vec<Vec<VarId>>,
    pub soc: Vec<Vec<VarId>>,
    pub v: Vec<Vec<VarId>>,
    pub theta: Vec<Vec<VarId>>,
    pub p: Vec<Vec<VarId>>,
    pub q: Vec<Vec<VarId>>,
}

/// The operational LP for fixed first-stage decisions, in the merged form
/// used for dualization: net-injection definitions are folded into the
/// balance rows, and investment terms appear as right-hand-side constants.
pub struct PrimalSub {
    pub model: LinearModel,
    pub tags: Vec<RhsTag>,
    pub blocks: Vec<SubVars>,
    /// Unweighted operational-cost expression per block.
    pub block_costs: Vec<LinExpr>,
}

pub fn build_primal_sub(
    case: &CaseData,
    x_hat: &InvestmentValues,
    blocks: &[SubBlockSpec],
) -> Result<PrimalSub, BuildError> {
    let nb = case.n_buses();
    let nl = case.network.n_lines();
    let nt = case.horizon;
    let tech = &case.tech;
    let cuts = case.polygon_cuts()?;
    let mut m = LinearModel::new();
    let mut tags = Vec::new();
    let mut out_blocks = Vec::new();
    let mut block_costs = Vec::new();
    let mut objective = LinExpr::new();

    for (s, spec) in blocks.iter().enumerate() {
        if spec.pl.len() != nb
            || spec.ql.len() != nb
            || spec.pl.iter().chain(spec.ql).any(|r| r.len() != nt)
            || spec.pv.len() != nt
            || spec.price.len() != nt
            || spec.w_hat.len() != nb
            || spec.w_hat.iter().any(|r| r.len() != nt)
        {
            return Err(BuildError::Dimension(format!(
                "subproblem block {s} does not match {nb} buses and {nt} slots"
            )));
        }
        let grid = |m: &mut LinearModel, name: &str, lb: f64| -> Vec<Vec<VarId>> {
            (0..nb)
                .map(|i| {
                    (0..nt)
                        .map(|t| {
                            m.add_continuous(format!("{name}[{s},{i},{t}]"), lb, f64::INFINITY)
                        })
                        .collect()
                })
                .collect()
        };
        let pg = grid(&mut m, "pg", 0.0);
        let qg = grid(&mut m, "qg", f64::NEG_INFINITY);
        let pv = grid(&mut m, "pv", 0.0);
        let ch = grid(&mut m, "ch", 0.0);
        let ds = grid(&mut m, "ds", 0.0);
        let soc = grid(&mut m, "soc", 0.0);
        let v = grid(&mut m, "v", 0.0);
        let theta = grid(&mut m, "theta", f64::NEG_INFINITY);
        let line_var = |m: &mut LinearModel, name: &str| -> Vec<Vec<VarId>> {
            (0..nl)
                .map(|l| {
                    (0..nt)
                        .map(|t| {
                            m.add_continuous(
                                format!("{name}[{s},{l},{t}]"),
                                f64::NEG_INFINITY,
                                f64::INFINITY,
                            )
                        })
                        .collect()
                })
                .collect()
        };
        let p = line_var(&mut m, "p");
        let q = line_var(&mut m, "q");

        for (i, bus) in case.network.buses.iter().enumerate() {
            for t in 0..nt {
                // merged active balance: flows minus local injections = -PL
                let mut bal = LinExpr::new();
                for (l, line) in case.network.lines.iter().enumerate() {
                    if line.from == i {
                        bal.add(p[l][t], 1.0);
                    } else if line.to == i {
                        bal.add(p[l][t], -1.0);
                    }
                }
                bal.add(pg[i][t], -1.0)
                    .add(pv[i][t], -1.0)
                    .add(ds[i][t], -1.0)
                    .add(ch[i][t], 1.0);
                let a_row = m.add_constraint(
                    format!("a[{s},{i},{t}]"),
                    bal,
                    ConstraintSense::Eq,
                    -spec.pl[i][t],
                );
                if spec.demand_uncertain {
                    tags.push(RhsTag {
                        row: a_row,
                        param: UncertainParam::Demand { bus: i, slot: t },
                        coeff: -1.0,
                    });
                }

                let mut bal_q = LinExpr::new();
                for (l, line) in case.network.lines.iter().enumerate() {
                    if line.from == i {
                        bal_q.add(q[l][t], 1.0);
                    } else if line.to == i {
                        bal_q.add(q[l][t], -1.0);
                    }
                }
                bal_q.add(qg[i][t], -1.0);
                m.add_constraint(
                    format!("b[{s},{i},{t}]"),
                    bal_q,
                    ConstraintSense::Eq,
                    -spec.ql[i][t],
                );

                m.add_constraint(
                    format!("f[{s},{i},{t}]"),
                    LinExpr::term(pg[i][t], 1.0),
                    ConstraintSense::Le,
                    bus.pg_max,
                );
                m.add_constraint(
                    format!("gmin[{s},{i},{t}]"),
                    LinExpr::term(qg[i][t], 1.0),
                    ConstraintSense::Ge,
                    bus.qg_min,
                );
                m.add_constraint(
                    format!("gmax[{s},{i},{t}]"),
                    LinExpr::term(qg[i][t], 1.0),
                    ConstraintSense::Le,
                    bus.qg_max,
                );
                m.add_constraint(
                    format!("hmin[{s},{i},{t}]"),
                    LinExpr::term(v[i][t], 1.0),
                    ConstraintSense::Ge,
                    bus.v_min,
                );
                m.add_constraint(
                    format!("hmax[{s},{i},{t}]"),
                    LinExpr::term(v[i][t], 1.0),
                    ConstraintSense::Le,
                    bus.v_max,
                );
                m.add_constraint(
                    format!("nmin[{s},{i},{t}]"),
                    LinExpr::term(theta[i][t], 1.0),
                    ConstraintSense::Ge,
                    bus.theta_min,
                );
                m.add_constraint(
                    format!("nmax[{s},{i},{t}]"),
                    LinExpr::term(theta[i][t], 1.0),
                    ConstraintSense::Le,
                    bus.theta_max,
                );
                if i == case.network.substation {
                    m.add_constraint(
                        format!("vref[{s},{t}]"),
                        LinExpr::term(v[i][t], 1.0),
                        ConstraintSense::Eq,
                        1.0,
                    );
                    m.add_constraint(
                        format!("thref[{s},{t}]"),
                        LinExpr::term(theta[i][t], 1.0),
                        ConstraintSense::Eq,
                        0.0,
                    );
                }

                let i_row = m.add_constraint(
                    format!("i[{s},{i},{t}]"),
                    LinExpr::term(pv[i][t], 1.0),
                    ConstraintSense::Le,
                    spec.pv[t] * x_hat.gamma_pv[i],
                );
                if spec.pv_uncertain {
                    tags.push(RhsTag {
                        row: i_row,
                        param: UncertainParam::Pv { slot: t },
                        coeff: x_hat.gamma_pv[i],
                    });
                }

                let mut dyn_ = LinExpr::term(soc[i][t], 1.0);
                dyn_.add(ch[i][t], -tech.eff_charge * tech.dt)
                    .add(ds[i][t], tech.dt / tech.eff_discharge);
                if t == 0 {
                    m.add_constraint(
                        format!("j[{s},{i},0]"),
                        dyn_,
                        ConstraintSense::Eq,
                        tech.soc_init * x_hat.gamma_bt[i],
                    );
                } else {
                    dyn_.add(soc[i][t - 1], -1.0);
                    m.add_constraint(format!("j[{s},{i},{t}]"), dyn_, ConstraintSense::Eq, 0.0);
                }
                m.add_constraint(
                    format!("kmin[{s},{i},{t}]"),
                    LinExpr::term(soc[i][t], 1.0),
                    ConstraintSense::Ge,
                    tech.soc_min * x_hat.gamma_bt[i],
                );
                m.add_constraint(
                    format!("kmax[{s},{i},{t}]"),
                    LinExpr::term(soc[i][t], 1.0),
                    ConstraintSense::Le,
                    tech.soc_max * x_hat.gamma_bt[i],
                );
                m.add_constraint(
                    format!("l[{s},{i},{t}]"),
                    LinExpr::term(ch[i][t], 1.0),
                    ConstraintSense::Le,
                    tech.pb * spec.w_hat[i][t],
                );
                m.add_constraint(
                    format!("m[{s},{i},{t}]"),
                    LinExpr::term(ds[i][t], 1.0),
                    ConstraintSense::Le,
                    tech.pb * (1.0 - spec.w_hat[i][t]),
                );
            }
        }

        for (l, line) in case.network.lines.iter().enumerate() {
            for t in 0..nt {
                let mut drop = LinExpr::term(v[line.to][t], 1.0);
                drop.add(v[line.from][t], -1.0)
                    .add(p[l][t], 2.0 * line.r)
                    .add(q[l][t], 2.0 * line.x);
                m.add_constraint(format!("c[{s},{l},{t}]"), drop, ConstraintSense::Eq, 0.0);

                let mut ang = LinExpr::term(theta[line.from][t], 1.0);
                ang.add(theta[line.to][t], -1.0)
                    .add(p[l][t], -line.x)
                    .add(q[l][t], line.r);
                m.add_constraint(format!("d[{s},{l},{t}]"), ang, ConstraintSense::Eq, 0.0);

                for (r, cut) in cuts.iter().enumerate() {
                    let mut flow = LinExpr::new();
                    flow.add(p[l][t], cut.a).add(q[l][t], cut.b);
                    m.add_constraint(
                        format!("e[{s},{l},{t},{r}]"),
                        flow,
                        ConstraintSense::Le,
                        -line.s_max * cut.c,
                    );
                }
            }
        }

        let mut cost = LinExpr::new();
        for i in 0..nb {
            for t in 0..nt {
                cost.add(pg[i][t], spec.price[t]);
                cost.add(pv[i][t], case.costs.oc_pv);
                cost.add(ds[i][t], case.costs.oc_bt);
            }
        }
        for &(var, coef) in &cost.terms {
            objective.add(var, spec.weight * coef);
        }
        block_costs.push(cost);
        out_blocks.push(SubVars {
            pg,
            qg,
            pv,
            ch,
            ds,
            soc,
            v,
            theta,
            p,
            q,
        });
    }

    m.set_objective(ObjSense::Minimize, objective);
    Ok(PrimalSub {
        model: m,
        tags,
        blocks: out_blocks,
        block_costs,
    })
}

/// The dual subproblem: maximization MILP whose optimum is the worst-case
/// operational cost over the budgeted set for the given first-stage point.
pub struct DualSubproblem {
    pub model: LinearModel,
    /// PV deviation binaries per slot, when PV is treated robustly.
    pub u_plus: Vec<VarId>,
    pub u_minus: Vec<VarId>,
    /// Demand deviation binaries per bus and slot.
    pub v_plus: Vec<Vec<VarId>>,
    pub v_minus: Vec<Vec<VarId>>,
    /// (aux_plus, aux_minus, dual var, binary pair) per tagged row, for the
    /// linearization-exactness checks.
    pub aux: Vec<BigMAux>,
    pub big_m: f64,
    horizon: usize,
    n_buses: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BigMAux {
    pub plus: VarId,
    pub minus: VarId,
    pub dual: VarId,
    pub bin_plus: VarId,
    pub bin_minus: VarId,
}

impl DualSubproblem {
    /// Reads the deviation pattern chosen by a solved dual subproblem.
    /// Parameters without deviation binaries stay at nominal.
    pub fn extract_point(&self, r: &SolveResult) -> ExtremePoint {
        let on = |v: VarId| r.value(v) > 0.5;
        let series = |vars: &[VarId]| -> Vec<bool> {
            if vars.is_empty() {
                vec![false; self.horizon]
            } else {
                vars.iter().map(|&v| on(v)).collect()
            }
        };
        let per_bus = |vars: &[Vec<VarId>]| -> Vec<Vec<bool>> {
            if vars.is_empty() {
                vec![vec![false; self.horizon]; self.n_buses]
            } else {
                vars.iter().map(|row| series(row)).collect()
            }
        };
        ExtremePoint {
            u_plus: series(&self.u_plus),
            u_minus: series(&self.u_minus),
            v_plus: per_bus(&self.v_plus),
            v_minus: per_bus(&self.v_minus),
        }
    }
}

/// Dualizes the primal subproblem and attaches the budgeted-uncertainty
/// apparatus: deviation binaries (fixed to zero where the deviation width is
/// zero), exclusivity and budget rows, and per-tag auxiliary variables with
/// Big-M rows making the objective linear in the binaries.
pub fn attach_uncertainty(
    primal: &PrimalSub,
    set: &BudgetedSet,
) -> Result<DualSubproblem, BuildError> {
    let dual = primal
        .model
        .dualize()
        .map_err(|e| BuildError::Dimension(e.to_string()))?;
    let mut m = dual.model;
    let nt = set.horizon();
    let nb = set.n_buses();
    let big_m = set.big_m();
    let pv_robust = primal
        .tags
        .iter()
        .any(|t| matches!(t.param, UncertainParam::Pv { .. }));
    let demand_robust = primal
        .tags
        .iter()
        .any(|t| matches!(t.param, UncertainParam::Demand { .. }));

    // binary that exists only where the parameter can actually deviate
    let bin = |m: &mut LinearModel, name: String, hat: f64| -> VarId {
        if hat > 0.0 {
            m.add_binary(name)
        } else {
            m.add_var(name, 0.0, 0.0, VarKind::Binary)
        }
    };

    let (u_plus, u_minus) = if pv_robust {
        let up: Vec<VarId> = (0..nt)
            .map(|t| bin(&mut m, format!("U+[{t}]"), set.pv_hat[t]))
            .collect();
        let um: Vec<VarId> = (0..nt)
            .map(|t| bin(&mut m, format!("U-[{t}]"), set.pv_hat[t]))
            .collect();
        for t in 0..nt {
            let mut excl = LinExpr::term(up[t], 1.0);
            excl.add(um[t], 1.0);
            m.add_constraint(format!("u_excl[{t}]"), excl, ConstraintSense::Le, 1.0);
        }
        let budget: LinExpr = up
            .iter()
            .chain(&um)
            .map(|&v| (v, 1.0))
            .collect();
        m.add_constraint("u_budget", budget, ConstraintSense::Le, set.beta_pv as f64);
        (up, um)
    } else {
        (Vec::new(), Vec::new())
    };

    let (v_plus, v_minus) = if demand_robust {
        let vp: Vec<Vec<VarId>> = (0..nb)
            .map(|i| {
                (0..nt)
                    .map(|t| bin(&mut m, format!("V+[{i},{t}]"), set.pl_hat[i][t]))
                    .collect()
            })
            .collect();
        let vm: Vec<Vec<VarId>> = (0..nb)
            .map(|i| {
                (0..nt)
                    .map(|t| bin(&mut m, format!("V-[{i},{t}]"), set.pl_hat[i][t]))
                    .collect()
            })
            .collect();
        for i in 0..nb {
            for t in 0..nt {
                let mut excl = LinExpr::term(vp[i][t], 1.0);
                excl.add(vm[i][t], 1.0);
                m.add_constraint(format!("v_excl[{i},{t}]"), excl, ConstraintSense::Le, 1.0);
            }
            let budget: LinExpr = vp[i]
                .iter()
                .chain(&vm[i])
                .map(|&v| (v, 1.0))
                .collect();
            m.add_constraint(
                format!("v_budget[{i}]"),
                budget,
                ConstraintSense::Le,
                set.beta_pl as f64,
            );
        }
        (vp, vm)
    } else {
        (Vec::new(), Vec::new())
    };

    let (mut obj, obj_sense) = {
        let (o, s) = m.objective();
        (o.clone(), s)
    };
    let mut aux_list = Vec::new();
    for (k, tag) in primal.tags.iter().enumerate() {
        let (hat, bp, bm) = match tag.param {
            UncertainParam::Demand { bus, slot } => {
                (set.pl_hat[bus][slot], v_plus[bus][slot], v_minus[bus][slot])
            }
            UncertainParam::Pv { slot } => (set.pv_hat[slot], u_plus[slot], u_minus[slot]),
        };
        let dual_var = dual.dual_var_of_row[tag.row.index()];
        let ap = m.add_continuous(format!("aux+[{k}]"), f64::NEG_INFINITY, f64::INFINITY);
        let am = m.add_continuous(format!("aux-[{k}]"), f64::NEG_INFINITY, f64::INFINITY);
        // objective deviation terms: coeff * hat * (aux+ - aux-)
        obj.add(ap, tag.coeff * hat);
        obj.add(am, -tag.coeff * hat);
        // aux = dual * binary, linearized with big-M:
        //   -bin*M <= aux <= bin*M
        //   dual - M*(1-bin) <= aux <= dual + M*(1-bin)
        for (side, a, b) in [("+", ap, bp), ("-", am, bm)] {
            let mut lo = LinExpr::term(a, 1.0);
            lo.add(b, big_m);
            m.add_constraint(format!("bm_act_lo{side}[{k}]"), lo, ConstraintSense::Ge, 0.0);
            let mut hi = LinExpr::term(a, 1.0);
            hi.add(b, -big_m);
            m.add_constraint(format!("bm_act_hi{side}[{k}]"), hi, ConstraintSense::Le, 0.0);
            let mut lo2 = LinExpr::term(a, 1.0);
            lo2.add(dual_var, -1.0).add(b, -big_m);
            m.add_constraint(
                format!("bm_link_lo{side}[{k}]"),
                lo2,
                ConstraintSense::Ge,
                -big_m,
            );
            let mut hi2 = LinExpr::term(a, 1.0);
            hi2.add(dual_var, -1.0).add(b, big_m);
            m.add_constraint(
                format!("bm_link_hi{side}[{k}]"),
                hi2,
                ConstraintSense::Le,
                big_m,
            );
        }
        aux_list.push(BigMAux {
            plus: ap,
            minus: am,
            dual: dual_var,
            bin_plus: bp,
            bin_minus: bm,
        });
    }
    m.set_objective(obj_sense, obj);

    Ok(DualSubproblem {
        model: m,
        u_plus,
        u_minus,
        v_plus,
        v_minus,
        aux: aux_list,
        big_m,
        horizon: nt,
        n_buses: nb,
    })
}
