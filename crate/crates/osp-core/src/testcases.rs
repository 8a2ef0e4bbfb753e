//! Small hand-checkable cases shared by the unit tests.

use crate::model::{
    Bus, CaseData, CostParams, Envelope, Line, LoadProfile, Network, PvProfile, TechParams,
};
use crate::uncertainty::Realization;

pub fn substation_bus(id: &str) -> Bus {
    Bus {
        id: id.into(),
        pg_max: 1000.0,
        qg_min: -1000.0,
        qg_max: 1000.0,
        v_min: 0.9,
        v_max: 1.1,
        theta_min: -0.5,
        theta_max: 0.5,
        pv_allowed: false,
        bess_allowed: false,
    }
}

pub fn load_bus(id: &str) -> Bus {
    Bus {
        id: id.into(),
        pg_max: 0.0,
        qg_min: 0.0,
        qg_max: 0.0,
        v_min: 0.9,
        v_max: 1.1,
        theta_min: -0.5,
        theta_max: 0.5,
        pv_allowed: true,
        bess_allowed: true,
    }
}

pub fn short_line(from: usize, to: usize) -> Line {
    Line {
        from,
        to,
        r: 0.001,
        x: 0.002,
        s_max: 1000.0,
    }
}

/// Probability-weighted expected realization of the case's profiles.
pub fn nominal(case: &CaseData) -> Realization {
    let rho = &case.probabilities;
    let pv = case
        .pv_profile
        .pv
        .iter()
        .map(|row| row.iter().zip(rho).map(|(x, p)| x * p).sum())
        .collect();
    let pl = case
        .loads
        .pl
        .iter()
        .map(|bus| {
            bus.iter()
                .map(|row| row.iter().zip(rho).map(|(x, p)| x * p).sum())
                .collect()
        })
        .collect();
    Realization { pv, pl }
}

/// Substation + one load bus, two slots, one scenario. Demand is 10 kW in
/// both slots; PV is available only in the first. With price 1, PV marginal
/// cost 0.5 and fixed cost 1, the optimum installs 10 kW of PV for a total
/// cost of 16 (vs 20 grid-only).
pub fn two_bus() -> CaseData {
    let mut load = load_bus("b1");
    load.bess_allowed = false;
    CaseData {
        name: "two-bus".into(),
        currency: "EUR".into(),
        power_unit: "kW".into(),
        network: Network {
            buses: vec![substation_bus("b0"), load],
            lines: vec![short_line(0, 1)],
            substation: 0,
        },
        tech: TechParams {
            soc_min: 0.0,
            soc_max: 1.0,
            soc_init: 0.0,
            eff_charge: 0.9,
            eff_discharge: 0.9,
            pb: 10.0,
            cap_min: 0.0,
            cap_max: 100.0,
            n_pv_max: 2,
            n_bt_max: 2,
            dt: 1.0,
        },
        costs: CostParams {
            c_pv: vec![0.5; 2],
            i_pv: vec![1.0; 2],
            c_bt: vec![0.01; 2],
            i_bt: vec![0.1; 2],
            oc_pv: 0.0,
            oc_bt: 0.0,
            price: vec![vec![1.0], vec![1.0]],
        },
        loads: LoadProfile {
            pl: vec![vec![vec![0.0], vec![0.0]], vec![vec![10.0], vec![10.0]]],
            ql: vec![vec![vec![0.0], vec![0.0]], vec![vec![0.0], vec![0.0]]],
        },
        pv_profile: PvProfile {
            pv: vec![vec![1.0], vec![0.0]],
        },
        horizon: 2,
        probabilities: vec![1.0],
        envelope: Envelope {
            pv_bar: vec![1.0, 0.0],
            pv_hat: vec![0.0, 0.0],
            pl_bar: vec![vec![0.0, 0.0], vec![10.0, 10.0]],
            pl_hat: vec![vec![0.0, 0.0], vec![2.0, 2.0]],
        },
        segments: 12,
    }
}

/// Variant of [`two_bus`] with two PV scenarios (sunny and cloudy) that
/// share the same demand and prices, so expectation-based and
/// scenario-based formulations stay hand-checkable.
pub fn two_bus_two_scen() -> CaseData {
    let mut case = two_bus();
    case.name = "two-bus-two-scen".into();
    case.probabilities = vec![0.6, 0.4];
    case.pv_profile.pv = vec![vec![1.0, 0.5], vec![0.0, 0.0]];
    case.costs.price = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
    case.loads.pl = vec![
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        vec![vec![10.0, 10.0], vec![10.0, 10.0]],
    ];
    case.loads.ql = vec![
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
    ];
    case.envelope.pv_bar = vec![0.8, 0.0];
    case
}

/// Variant of [`two_bus`] that makes battery arbitrage attractive: no PV,
/// cheap energy in slot one and expensive in slot two.
pub fn two_bus_battery() -> CaseData {
    let mut case = two_bus();
    case.name = "two-bus-battery".into();
    case.network.buses[1].pv_allowed = false;
    case.network.buses[1].bess_allowed = true;
    case.costs.price = vec![vec![0.1], vec![1.0]];
    case.loads.pl = vec![vec![vec![0.0], vec![0.0]], vec![vec![5.0], vec![5.0]]];
    case.pv_profile.pv = vec![vec![0.0], vec![0.0]];
    case.envelope.pv_bar = vec![0.0, 0.0];
    case.envelope.pl_bar = vec![vec![0.0, 0.0], vec![5.0, 5.0]];
    case.envelope.pl_hat = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
    case
}
