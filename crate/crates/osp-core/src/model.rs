//! Domain types for the radial network, technologies, costs, profiles, and
//! horizon, plus case validation and the polygonal line-capacity cuts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("polygon linearization needs at least 4 segments, got {0}")]
    TooFewSegments(usize),
    #[error("case is not well-formed: {0}")]
    Invalid(String),
}

/// A network bus. Voltage bounds are on the squared magnitude in per-unit
/// (lossless linearized DistFlow convention).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    /// Substation active-power capacity in kW; zero for non-substation buses.
    pub pg_max: f64,
    pub qg_min: f64,
    pub qg_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub pv_allowed: bool,
    pub bess_allowed: bool,
}

/// A distribution line, directed from `from` to `to`. Bus references are
/// indices into [`Network::buses`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Per-unit resistance.
    pub r: f64,
    /// Per-unit reactance.
    pub x: f64,
    /// Apparent-power limit in kVA.
    pub s_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    /// Index of the substation bus.
    pub substation: usize,
}

impl Network {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// True iff the network is a single connected tree (radial).
    pub fn is_radial(&self) -> bool {
        let n = self.n_buses();
        if n == 0 || self.lines.len() != n - 1 {
            return false;
        }
        if self
            .lines
            .iter()
            .any(|l| l.from >= n || l.to >= n || l.from == l.to)
        {
            return false;
        }
        // |L| = |B|-1, so connectivity alone rules out cycles.
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == n
    }
}

/// Battery and installation technology parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TechParams {
    /// SOC bounds and initial SOC as fractions of installed kWh.
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
    pub eff_charge: f64,
    pub eff_discharge: f64,
    /// Maximum charge/discharge power in kW.
    pub pb: f64,
    /// Installation capacity bounds (kW for PV, kWh for BESS).
    pub cap_min: f64,
    pub cap_max: f64,
    pub n_pv_max: usize,
    pub n_bt_max: usize,
    /// Hours per time slot.
    pub dt: f64,
}

/// Investment and operational cost parameters. Per-bus vectors are indexed
/// like [`Network::buses`]; `price` is indexed `[slot][scenario]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostParams {
    pub c_pv: Vec<f64>,
    pub i_pv: Vec<f64>,
    pub c_bt: Vec<f64>,
    pub i_bt: Vec<f64>,
    pub oc_pv: f64,
    pub oc_bt: f64,
    pub price: Vec<Vec<f64>>,
}

impl CostParams {
    /// Probability-weighted price per slot.
    pub fn nominal_price(&self, probabilities: &[f64]) -> Vec<f64> {
        self.price
            .iter()
            .map(|row| row.iter().zip(probabilities).map(|(p, rho)| p * rho).sum())
            .collect()
    }
}

/// Active and reactive load, indexed `[bus][slot][scenario]` in kW / kvar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadProfile {
    pub pl: Vec<Vec<Vec<f64>>>,
    pub ql: Vec<Vec<Vec<f64>>>,
}

impl LoadProfile {
    /// Probability-weighted reactive load per bus and slot.
    pub fn nominal_ql(&self, probabilities: &[f64]) -> Vec<Vec<f64>> {
        self.ql
            .iter()
            .map(|bus| {
                bus.iter()
                    .map(|row| row.iter().zip(probabilities).map(|(q, rho)| q * rho).sum())
                    .collect()
            })
            .collect()
    }
}

/// Normalized PV availability as a fraction of installed capacity,
/// indexed `[slot][scenario]`, values in `[0, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PvProfile {
    pub pv: Vec<Vec<f64>>,
}

/// Expected values and maximum deviations for the uncertain parameters;
/// budgets are attached separately when a budgeted set is formed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope {
    /// Per-slot expected PV fraction and max deviation.
    pub pv_bar: Vec<f64>,
    pub pv_hat: Vec<f64>,
    /// Per-bus-per-slot expected demand and max deviation.
    pub pl_bar: Vec<Vec<f64>>,
    pub pl_hat: Vec<Vec<f64>>,
}

/// A complete planning case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseData {
    pub name: String,
    pub currency: String,
    pub power_unit: String,
    pub network: Network,
    pub tech: TechParams,
    pub costs: CostParams,
    pub loads: LoadProfile,
    pub pv_profile: PvProfile,
    /// Number of time slots.
    pub horizon: usize,
    /// Scenario probabilities, summing to 1.
    pub probabilities: Vec<f64>,
    pub envelope: Envelope,
    /// Number of polygon segments for the line-capacity linearization.
    pub segments: usize,
}

impl CaseData {
    pub fn n_buses(&self) -> usize {
        self.network.n_buses()
    }

    pub fn n_scenarios(&self) -> usize {
        self.probabilities.len()
    }

    pub fn polygon_cuts(&self) -> Result<Vec<PolygonCut>, CaseError> {
        polygon_coefficients(self.segments)
    }
}

/// One half-plane cut `a*p + b*q + c*s_max <= 0` of the polygonal
/// line-capacity region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolygonCut {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Regular-polygon outer cuts for the apparent-power disc: cut `r` reads
/// `p*cos(2*pi*r/n) + q*sin(2*pi*r/n) <= s_max`. Any point of the disc of
/// radius `s_max` satisfies all cuts; any feasible point lies in the disc
/// of radius `s_max / cos(pi/n)`.
pub fn polygon_coefficients(n_segments: usize) -> Result<Vec<PolygonCut>, CaseError> {
    if n_segments < 4 {
        return Err(CaseError::TooFewSegments(n_segments));
    }
    let n = n_segments as f64;
    Ok((0..n_segments)
        .map(|r| {
            let angle = 2.0 * std::f64::consts::PI * r as f64 / n;
            PolygonCut {
                a: angle.cos(),
                b: angle.sin(),
                c: -1.0,
            }
        })
        .collect())
}

/// Result of [`validate_case`]: the case is well-formed iff no violations
/// were recorded.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(msg());
        }
    }
}

/// Checks topology, bounds, and dimension consistency of a case.
/// Report-style: never errors, returns the list of violations.
pub fn validate_case(case: &CaseData) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let net = &case.network;
    let nb = net.n_buses();
    let nt = case.horizon;
    let ns = case.n_scenarios();

    rep.check(nb > 0, || "network has no buses".into());
    rep.check(net.substation < nb, || "substation index out of range".into());
    for l in &net.lines {
        rep.check(l.from < nb && l.to < nb, || {
            format!("line ({},{}) references an unknown bus", l.from, l.to)
        });
        rep.check(l.from != l.to, || format!("line ({0},{0}) is a self-loop", l.from));
        rep.check(l.r >= 0.0 && l.x >= 0.0, || {
            format!("line ({},{}) has negative impedance", l.from, l.to)
        });
        rep.check(l.s_max > 0.0, || {
            format!("line ({},{}) has nonpositive capacity", l.from, l.to)
        });
    }
    rep.check(net.is_radial(), || {
        format!(
            "not radial: {} buses require exactly {} lines forming a connected tree, got {}",
            nb,
            nb.saturating_sub(1),
            net.n_lines()
        )
    });
    for b in &net.buses {
        rep.check(b.v_min < b.v_max, || format!("bus {}: voltage bounds inverted", b.id));
        rep.check(b.qg_min <= b.qg_max, || format!("bus {}: qg bounds inverted", b.id));
        rep.check(b.theta_min <= b.theta_max, || {
            format!("bus {}: angle bounds inverted", b.id)
        });
        rep.check(b.pg_max >= 0.0, || format!("bus {}: negative pg_max", b.id));
    }

    let tech = &case.tech;
    rep.check(
        0.0 <= tech.soc_min && tech.soc_min < tech.soc_max && tech.soc_max <= 1.0,
        || "soc bounds inverted or outside [0, 1]".into(),
    );
    rep.check(
        tech.soc_min <= tech.soc_init && tech.soc_init <= tech.soc_max,
        || "soc_init outside [soc_min, soc_max]".into(),
    );
    rep.check(
        tech.eff_charge > 0.0 && tech.eff_charge <= 1.0 && tech.eff_discharge > 0.0
            && tech.eff_discharge <= 1.0,
        || "battery efficiencies must lie in (0, 1]".into(),
    );
    rep.check(tech.cap_min <= tech.cap_max, || "capacity bounds inverted".into());
    rep.check(tech.pb >= 0.0, || "negative battery power limit".into());
    rep.check(tech.dt > 0.0, || "nonpositive time-slot length".into());

    let costs = &case.costs;
    for (name, v) in [
        ("c_pv", &costs.c_pv),
        ("i_pv", &costs.i_pv),
        ("c_bt", &costs.c_bt),
        ("i_bt", &costs.i_bt),
    ] {
        rep.check(v.len() == nb, || format!("costs.{name} has {} entries, expected {nb}", v.len()));
        rep.check(v.iter().all(|&x| x >= 0.0), || format!("costs.{name} has negative entries"));
    }
    rep.check(costs.oc_pv >= 0.0 && costs.oc_bt >= 0.0, || "negative operational cost".into());
    rep.check(
        costs.price.len() == nt && costs.price.iter().all(|row| row.len() == ns),
        || "price matrix dimensions do not match horizon and scenario count".into(),
    );
    rep.check(
        costs.price.iter().flatten().all(|&x| x >= 0.0),
        || "negative energy price".into(),
    );

    for (name, m) in [("pl", &case.loads.pl), ("ql", &case.loads.ql)] {
        rep.check(
            m.len() == nb && m.iter().all(|b| b.len() == nt && b.iter().all(|r| r.len() == ns)),
            || format!("loads.{name} dimensions do not match network, horizon, and scenarios"),
        );
    }
    rep.check(
        case.loads.pl.iter().flatten().flatten().all(|&x| x >= 0.0),
        || "negative active load".into(),
    );

    rep.check(
        case.pv_profile.pv.len() == nt && case.pv_profile.pv.iter().all(|r| r.len() == ns),
        || "pv profile dimensions do not match horizon and scenarios".into(),
    );
    rep.check(
        case.pv_profile
            .pv
            .iter()
            .flatten()
            .all(|&x| (0.0..=1.0).contains(&x)),
        || "pv profile values must lie in [0, 1]".into(),
    );

    rep.check(!case.probabilities.is_empty(), || "no scenarios declared".into());
    rep.check(case.probabilities.iter().all(|&p| p > 0.0), || {
        "scenario probabilities must be positive".into()
    });
    let total: f64 = case.probabilities.iter().sum();
    rep.check((total - 1.0).abs() <= 1e-9, || {
        format!("scenario probabilities sum to {total}, expected 1")
    });

    let env = &case.envelope;
    rep.check(
        env.pv_bar.len() == nt && env.pv_hat.len() == nt,
        || "pv envelope length does not match horizon".into(),
    );
    rep.check(
        env.pl_bar.len() == nb
            && env.pl_hat.len() == nb
            && env.pl_bar.iter().all(|r| r.len() == nt)
            && env.pl_hat.iter().all(|r| r.len() == nt),
        || "demand envelope dimensions do not match network and horizon".into(),
    );
    rep.check(
        env.pv_hat.iter().chain(env.pl_hat.iter().flatten()).all(|&h| h >= 0.0),
        || "envelope deviations must be nonnegative".into(),
    );
    rep.check(
        env.pv_bar
            .iter()
            .zip(&env.pv_hat)
            .all(|(&b, &h)| b - h >= -1e-9 && b + h <= 1.0 + 1e-9),
        || "pv envelope exceeds [0, 1]; clip bars and hats to the profile range".into(),
    );

    rep.check(case.segments >= 4, || "polygon linearization needs at least 4 segments".into());
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_bus(id: &str) -> Bus {
        Bus {
            id: id.into(),
            pg_max: 0.0,
            qg_min: -10.0,
            qg_max: 10.0,
            v_min: 0.9,
            v_max: 1.1,
            theta_min: -0.5,
            theta_max: 0.5,
            pv_allowed: true,
            bess_allowed: true,
        }
    }

    fn line(from: usize, to: usize) -> Line {
        Line {
            from,
            to,
            r: 0.01,
            x: 0.02,
            s_max: 100.0,
        }
    }

    fn tiny_case(network: Network) -> CaseData {
        let nb = network.n_buses();
        CaseData {
            name: "tiny".into(),
            currency: "EUR".into(),
            power_unit: "kW".into(),
            network,
            tech: TechParams {
                soc_min: 0.1,
                soc_max: 0.9,
                soc_init: 0.5,
                eff_charge: 0.95,
                eff_discharge: 0.95,
                pb: 10.0,
                cap_min: 0.0,
                cap_max: 100.0,
                n_pv_max: nb,
                n_bt_max: nb,
                dt: 1.0,
            },
            costs: CostParams {
                c_pv: vec![1.0; nb],
                i_pv: vec![1.0; nb],
                c_bt: vec![1.0; nb],
                i_bt: vec![1.0; nb],
                oc_pv: 0.0,
                oc_bt: 0.0,
                price: vec![vec![1.0]; 2],
            },
            loads: LoadProfile {
                pl: vec![vec![vec![1.0]; 2]; nb],
                ql: vec![vec![vec![0.0]; 2]; nb],
            },
            pv_profile: PvProfile {
                pv: vec![vec![0.5]; 2],
            },
            horizon: 2,
            probabilities: vec![1.0],
            envelope: Envelope {
                pv_bar: vec![0.5; 2],
                pv_hat: vec![0.1; 2],
                pl_bar: vec![vec![1.0; 2]; nb],
                pl_hat: vec![vec![0.1; 2]; nb],
            },
            segments: 12,
        }
    }

    #[test]
    fn thirty_three_bus_tree_accepted() {
        // path topology: 33 buses, 32 lines
        let buses: Vec<_> = (0..33).map(|i| unit_bus(&format!("b{i}"))).collect();
        let lines: Vec<_> = (1..33).map(|i| line(i - 1, i)).collect();
        let mut net = Network {
            buses,
            lines,
            substation: 0,
        };
        net.buses[0].pg_max = 1e6;
        let case = tiny_case(net);
        let rep = validate_case(&case);
        assert!(rep.is_ok(), "{:?}", rep.violations);
    }

    #[test]
    fn cycle_rejected() {
        let net = Network {
            buses: (0..3).map(|i| unit_bus(&format!("b{i}"))).collect(),
            lines: vec![line(0, 1), line(1, 2), line(2, 0)],
            substation: 0,
        };
        let rep = validate_case(&tiny_case(net));
        assert!(rep.violations.iter().any(|v| v.contains("not radial")));
    }

    #[test]
    fn inverted_soc_bounds_flagged() {
        let net = Network {
            buses: vec![unit_bus("b0"), unit_bus("b1")],
            lines: vec![line(0, 1)],
            substation: 0,
        };
        let mut case = tiny_case(net);
        case.tech.soc_min = 0.9;
        case.tech.soc_max = 0.2;
        let rep = validate_case(&case);
        assert!(rep.violations.iter().any(|v| v.contains("soc bounds inverted")));
    }

    #[test]
    fn polygon_needs_four_segments() {
        assert!(matches!(
            polygon_coefficients(3),
            Err(CaseError::TooFewSegments(3))
        ));
    }

    #[test]
    fn polygon_square_is_axis_aligned() {
        let cuts = polygon_coefficients(4).unwrap();
        let s = 7.0;
        // cuts at 0, 90, 180, 270 degrees: p<=s, q<=s, -p<=s, -q<=s
        let eval = |cut: &PolygonCut, p: f64, q: f64| cut.a * p + cut.b * q + cut.c * s;
        assert!((eval(&cuts[0], s, 0.0)).abs() < 1e-12);
        assert!((eval(&cuts[1], 0.0, s)).abs() < 1e-12);
        assert!((eval(&cuts[2], -s, 0.0)).abs() < 1e-12);
        assert!((eval(&cuts[3], 0.0, -s)).abs() < 1e-12);
    }

    #[test]
    fn polygon_vertex_direction_feasible() {
        let cuts = polygon_coefficients(12).unwrap();
        let s = 3.0;
        for cut in &cuts {
            assert!(cut.a * s + cut.b * 0.0 + cut.c * s <= 1e-12);
        }
    }

    #[test]
    fn polygon_contains_shrunken_disc() {
        // brute-force evaluation of all cuts over sampled angles
        let n = 12;
        let cuts = polygon_coefficients(n).unwrap();
        let s = 5.0;
        let inner = s * (std::f64::consts::PI / n as f64).cos();
        for k in 0..100 {
            let phi = 2.0 * std::f64::consts::PI * (k as f64 * 0.618_033_988_75).fract();
            let (p, q) = (0.99 * inner * phi.cos(), 0.99 * inner * phi.sin());
            for cut in &cuts {
                assert!(
                    cut.a * p + cut.b * q + cut.c * s <= 1e-12,
                    "cut violated at angle {phi}"
                );
            }
        }
    }

    #[test]
    fn polygon_feasible_points_bounded() {
        // any point satisfying all cuts lies within s/cos(pi/n) of the origin
        let n = 8;
        let cuts = polygon_coefficients(n).unwrap();
        let s = 2.0;
        let outer = s / (std::f64::consts::PI / n as f64).cos();
        for k in 0..200 {
            let phi = 0.05 * k as f64;
            let rad = 1.0001 * outer;
            let (p, q) = (rad * phi.cos(), rad * phi.sin());
            let feasible = cuts.iter().all(|c| c.a * p + c.b * q + c.c * s <= 0.0);
            assert!(!feasible, "point outside the circumscribed disc accepted");
        }
    }
}
