//! Budgeted uncertainty sets, discrete scenario sets, percentile envelopes,
//! backward scenario reduction, and exhaustive extreme-point enumeration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CaseData, Envelope};

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("history must contain at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("percentiles must satisfy 0 <= low < high <= 100, got ({low}, {high})")]
    InvalidPercentiles { low: f64, high: f64 },
    #[error("scenario count must lie in 1..={max}, got {got}")]
    InvalidScenarioCount { got: usize, max: usize },
    #[error("extreme-point set has {count} members, above the limit {limit}")]
    TooManyExtremePoints { count: u128, limit: usize },
    #[error("extreme point violates the uncertainty set: {0}")]
    InvalidExtremePoint(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Budgeted (Bertsimas–Sim style) uncertainty set around the envelope:
/// PV deviations share one budget over the horizon, demand deviations get
/// one budget per bus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetedSet {
    /// Per-slot expected PV fraction and max deviation.
    pub pv_bar: Vec<f64>,
    pub pv_hat: Vec<f64>,
    /// Per-bus-per-slot expected demand and max deviation.
    pub pl_bar: Vec<Vec<f64>>,
    pub pl_hat: Vec<Vec<f64>>,
    /// Max number of slots at which PV may reach its extreme deviation.
    pub beta_pv: usize,
    /// Max number of slots, per bus, at which demand may deviate.
    pub beta_pl: usize,
}

impl BudgetedSet {
    pub fn from_envelope(env: &Envelope, beta_pl: usize, beta_pv: usize) -> Self {
        Self {
            pv_bar: env.pv_bar.clone(),
            pv_hat: env.pv_hat.clone(),
            pl_bar: env.pl_bar.clone(),
            pl_hat: env.pl_hat.clone(),
            beta_pv,
            beta_pl,
        }
    }

    pub fn horizon(&self) -> usize {
        self.pv_bar.len()
    }

    pub fn n_buses(&self) -> usize {
        self.pl_bar.len()
    }

    /// Nominal realization: every parameter at its expected value.
    pub fn nominal(&self) -> Realization {
        Realization {
            pv: self.pv_bar.clone(),
            pl: self.pl_bar.clone(),
        }
    }

    /// The largest absolute value any uncertain parameter can take; used as
    /// the Big-M constant of the dual-subproblem linearization.
    pub fn big_m(&self) -> f64 {
        let pl_max = self
            .pl_bar
            .iter()
            .zip(&self.pl_hat)
            .flat_map(|(b, h)| b.iter().zip(h).map(|(&x, &d)| x + d))
            .fold(0.0f64, f64::max);
        let pv_max = self
            .pv_bar
            .iter()
            .zip(&self.pv_hat)
            .map(|(&x, &d)| x + d)
            .fold(0.0f64, f64::max);
        pl_max.max(pv_max)
    }
}

/// One concrete assignment of the uncertain parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    /// Per-slot PV fraction.
    pub pv: Vec<f64>,
    /// Per-bus-per-slot active demand.
    pub pl: Vec<Vec<f64>>,
}

impl Realization {
    /// Membership in the budgeted set. A slot with zero deviation width
    /// contributes zero to the budget and cannot move.
    pub fn is_member(&self, set: &BudgetedSet, tol: f64) -> bool {
        let series_ok = |vals: &[f64], bars: &[f64], hats: &[f64], beta: usize| {
            if vals.len() != bars.len() {
                return false;
            }
            let mut budget = 0.0;
            for ((&v, &b), &h) in vals.iter().zip(bars).zip(hats) {
                let dev = (v - b).abs();
                if dev > h + tol {
                    return false;
                }
                if h > 0.0 {
                    budget += dev / h;
                }
            }
            budget <= beta as f64 + tol
        };
        series_ok(&self.pv, &set.pv_bar, &set.pv_hat, set.beta_pv)
            && self.pl.len() == set.pl_bar.len()
            && self
                .pl
                .iter()
                .zip(&set.pl_bar)
                .zip(&set.pl_hat)
                .all(|((v, b), h)| series_ok(v, b, h, set.beta_pl))
    }
}

/// Discrete scenarios with probabilities; profile matrices are indexed
/// `[slot][scenario]` (demand and reactive demand `[bus][slot][scenario]`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub probabilities: Vec<f64>,
    pub pv: Vec<Vec<f64>>,
    pub pl: Vec<Vec<Vec<f64>>>,
    pub ql: Vec<Vec<Vec<f64>>>,
    pub prices: Vec<Vec<f64>>,
}

impl ScenarioSet {
    pub fn from_case(case: &CaseData) -> Self {
        Self {
            probabilities: case.probabilities.clone(),
            pv: case.pv_profile.pv.clone(),
            pl: case.loads.pl.clone(),
            ql: case.loads.ql.clone(),
            prices: case.costs.price.clone(),
        }
    }

    pub fn n_scenarios(&self) -> usize {
        self.probabilities.len()
    }
}

/// One extreme point of the budgeted set: sign/position pattern of the
/// deviations. `u` flags are the PV slots, `v` flags the per-bus demand
/// slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtremePoint {
    pub u_plus: Vec<bool>,
    pub u_minus: Vec<bool>,
    pub v_plus: Vec<Vec<bool>>,
    pub v_minus: Vec<Vec<bool>>,
}

impl ExtremePoint {
    pub fn nominal(n_buses: usize, horizon: usize) -> Self {
        Self {
            u_plus: vec![false; horizon],
            u_minus: vec![false; horizon],
            v_plus: vec![vec![false; horizon]; n_buses],
            v_minus: vec![vec![false; horizon]; n_buses],
        }
    }

    fn validate(&self, set: &BudgetedSet) -> Result<(), UncertaintyError> {
        let t = set.horizon();
        let nb = set.n_buses();
        if self.u_plus.len() != t
            || self.u_minus.len() != t
            || self.v_plus.len() != nb
            || self.v_minus.len() != nb
            || self.v_plus.iter().chain(&self.v_minus).any(|r| r.len() != t)
        {
            return Err(UncertaintyError::DimensionMismatch(
                "extreme point does not match the set's horizon and bus count".into(),
            ));
        }
        let mut pv_used = 0usize;
        for (slot, (&up, &um)) in self.u_plus.iter().zip(&self.u_minus).enumerate() {
            if up && um {
                return Err(UncertaintyError::InvalidExtremePoint(format!(
                    "pv slot {slot} deviates in both directions"
                )));
            }
            pv_used += (up || um) as usize;
        }
        if pv_used > set.beta_pv {
            return Err(UncertaintyError::InvalidExtremePoint(format!(
                "pv budget exceeded: {pv_used} > {}",
                set.beta_pv
            )));
        }
        for (bus, (vp, vm)) in self.v_plus.iter().zip(&self.v_minus).enumerate() {
            let mut used = 0usize;
            for (slot, (&p, &m)) in vp.iter().zip(vm).enumerate() {
                if p && m {
                    return Err(UncertaintyError::InvalidExtremePoint(format!(
                        "demand at bus {bus}, slot {slot} deviates in both directions"
                    )));
                }
                used += (p || m) as usize;
            }
            if used > set.beta_pl {
                return Err(UncertaintyError::InvalidExtremePoint(format!(
                    "demand budget exceeded at bus {bus}: {used} > {}",
                    set.beta_pl
                )));
            }
        }
        Ok(())
    }
}

/// Per-slot mean and percentile-band half-width from a history matrix
/// (`history[slot][sample]`). Percentiles use linear interpolation between
/// order statistics.
pub fn envelope_from_history(
    history: &[Vec<f64>],
    p_low: f64,
    p_high: f64,
) -> Result<(Vec<f64>, Vec<f64>), UncertaintyError> {
    if !(0.0..=100.0).contains(&p_low) || !(0.0..=100.0).contains(&p_high) || p_low >= p_high {
        return Err(UncertaintyError::InvalidPercentiles {
            low: p_low,
            high: p_high,
        });
    }
    envelope_by(history, |samples, bar| {
        let hi = percentile(samples, p_high);
        let lo = percentile(samples, p_low);
        (hi - bar).max(bar - lo).max(0.0)
    })
}

/// Per-slot mean and min/max-band half-width: the deviation reaches the most
/// extreme observed sample.
pub fn envelope_minmax(history: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), UncertaintyError> {
    envelope_by(history, |samples, bar| {
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi - bar).max(bar - lo).max(0.0)
    })
}

fn envelope_by(
    history: &[Vec<f64>],
    hat_of: impl Fn(&[f64], f64) -> f64,
) -> Result<(Vec<f64>, Vec<f64>), UncertaintyError> {
    if history.is_empty() || history.iter().any(|row| row.len() < 2) {
        let got = history.iter().map(|r| r.len()).min().unwrap_or(0);
        return Err(UncertaintyError::TooFewSamples { needed: 2, got });
    }
    let mut bars = Vec::with_capacity(history.len());
    let mut hats = Vec::with_capacity(history.len());
    for row in history {
        let mut sorted = row.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let bar = sorted.iter().sum::<f64>() / sorted.len() as f64;
        bars.push(bar);
        hats.push(hat_of(&sorted, bar));
    }
    Ok((bars, hats))
}

/// Linear-interpolation percentile of an already sorted sample.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// One historical sample trajectory over the horizon.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Per-slot PV fraction.
    pub pv: Vec<f64>,
    /// Per-bus-per-slot demand; demand trajectories are paired with their
    /// PV trajectory and follow it through reduction.
    pub pl: Vec<Vec<f64>>,
    pub ql: Vec<Vec<f64>>,
    /// Per-slot energy price.
    pub price: Vec<f64>,
}

/// Backward scenario reduction to `k` scenarios on Euclidean trajectory
/// distance over the (pv, pl) components. Starts from uniform probabilities;
/// each deleted scenario's probability moves to its nearest survivor.
pub fn reduce_scenarios(history: &[Trajectory], k: usize) -> Result<ScenarioSet, UncertaintyError> {
    let n = history.len();
    if k < 1 || k > n {
        return Err(UncertaintyError::InvalidScenarioCount { got: k, max: n });
    }
    let dist = |a: &Trajectory, b: &Trajectory| -> f64 {
        let d_pv: f64 = a
            .pv
            .iter()
            .zip(&b.pv)
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let d_pl: f64 = a
            .pl
            .iter()
            .zip(&b.pl)
            .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)))
            .sum();
        (d_pv + d_pl).sqrt()
    };
    let d: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dist(&history[i], &history[j])).collect())
        .collect();

    let mut alive: Vec<usize> = (0..n).collect();
    let mut rho = vec![1.0 / n as f64; n];
    while alive.len() > k {
        // delete the scenario with the smallest probability-weighted
        // distance to its nearest remaining peer
        let (&victim, _) = alive
            .iter()
            .map(|&s| {
                let nearest = alive
                    .iter()
                    .filter(|&&o| o != s)
                    .map(|&o| d[s][o])
                    .fold(f64::INFINITY, f64::min);
                (s, rho[s] * nearest)
            })
            .collect::<Vec<_>>()
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|&(ref s, c)| (s, c))
            .unwrap();
        alive.retain(|&s| s != victim);
        let heir = *alive
            .iter()
            .min_by(|&&a, &&b| d[victim][a].partial_cmp(&d[victim][b]).unwrap())
            .unwrap();
        rho[heir] += rho[victim];
        rho[victim] = 0.0;
        debug_assert!((alive.iter().map(|&s| rho[s]).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    let horizon = history[0].pv.len();
    let n_buses = history[0].pl.len();
    let mut set = ScenarioSet {
        probabilities: alive.iter().map(|&s| rho[s]).collect(),
        pv: vec![Vec::with_capacity(k); horizon],
        pl: vec![vec![Vec::with_capacity(k); horizon]; n_buses],
        ql: vec![vec![Vec::with_capacity(k); horizon]; n_buses],
        prices: vec![Vec::with_capacity(k); horizon],
    };
    for &s in &alive {
        let tr = &history[s];
        for t in 0..horizon {
            set.pv[t].push(tr.pv[t]);
            set.prices[t].push(tr.price[t]);
            for i in 0..n_buses {
                set.pl[i][t].push(tr.pl[i][t]);
                set.ql[i][t].push(tr.ql[i][t]);
            }
        }
    }
    Ok(set)
}

/// Instantiates the realization selected by an extreme point:
/// value = bar + hat·(plus − minus).
pub fn realize(set: &BudgetedSet, ep: &ExtremePoint) -> Result<Realization, UncertaintyError> {
    ep.validate(set)?;
    let pv = set
        .pv_bar
        .iter()
        .zip(&set.pv_hat)
        .zip(ep.u_plus.iter().zip(&ep.u_minus))
        .map(|((&b, &h), (&up, &um))| b + h * (up as i8 as f64 - um as i8 as f64))
        .collect();
    let pl = set
        .pl_bar
        .iter()
        .zip(&set.pl_hat)
        .zip(ep.v_plus.iter().zip(&ep.v_minus))
        .map(|((bars, hats), (vp, vm))| {
            bars.iter()
                .zip(hats)
                .zip(vp.iter().zip(vm))
                .map(|((&b, &h), (&p, &m))| b + h * (p as i8 as f64 - m as i8 as f64))
                .collect()
        })
        .collect();
    Ok(Realization { pv, pl })
}

/// Number of sign/position patterns of one series: Σ_{k=0..β} C(n,k)·2^k,
/// where n counts the slots that can actually move (hat > 0).
fn series_count(n_active: usize, beta: usize) -> Option<u128> {
    let mut total: u128 = 0;
    let mut binom: u128 = 1; // C(n_active, k)
    let mut pow2: u128 = 1;
    for k in 0..=beta.min(n_active) {
        total = total.checked_add(binom.checked_mul(pow2)?)?;
        binom = binom
            .checked_mul((n_active - k) as u128)?
            .checked_div((k + 1) as u128)?;
        pow2 = pow2.checked_mul(2)?;
    }
    Some(total)
}

/// Total number of extreme points of the set.
pub fn count_extreme_points(set: &BudgetedSet) -> Option<u128> {
    let pv_active = set.pv_hat.iter().filter(|&&h| h > 0.0).count();
    let mut total = series_count(pv_active, set.beta_pv)?;
    for hats in &set.pl_hat {
        let active = hats.iter().filter(|&&h| h > 0.0).count();
        total = total.checked_mul(series_count(active, set.beta_pl)?)?;
    }
    Some(total)
}

/// Sign patterns over the active slots of one series: each pattern is a list
/// of (slot, +1/−1) pairs, at most `beta` of them. Deterministic order.
fn series_patterns(active: &[usize], beta: usize) -> Vec<Vec<(usize, i8)>> {
    let mut out = vec![Vec::new()];
    // grow by number of deviating slots
    let mut frontier: Vec<Vec<(usize, i8)>> = vec![Vec::new()];
    for _ in 0..beta {
        let mut next = Vec::new();
        for pat in &frontier {
            let start = pat.last().map_or(0, |&(slot, _)| {
                active.iter().position(|&a| a == slot).unwrap() + 1
            });
            for &slot in &active[start.min(active.len())..] {
                for sign in [1i8, -1] {
                    let mut grown = pat.clone();
                    grown.push((slot, sign));
                    next.push(grown);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    out
}

/// Every extreme point of the set, each exactly once, in a deterministic
/// order. Refuses to generate more than `limit` points.
pub fn enumerate_extreme_points(
    set: &BudgetedSet,
    limit: usize,
) -> Result<Vec<ExtremePoint>, UncertaintyError> {
    let count = count_extreme_points(set).ok_or(UncertaintyError::TooManyExtremePoints {
        count: u128::MAX,
        limit,
    })?;
    if count > limit as u128 {
        return Err(UncertaintyError::TooManyExtremePoints { count, limit });
    }
    let t = set.horizon();
    let nb = set.n_buses();

    let pv_active: Vec<usize> = (0..t).filter(|&s| set.pv_hat[s] > 0.0).collect();
    let pv_patterns = series_patterns(&pv_active, set.beta_pv);
    let bus_patterns: Vec<Vec<Vec<(usize, i8)>>> = (0..nb)
        .map(|i| {
            let active: Vec<usize> = (0..t).filter(|&s| set.pl_hat[i][s] > 0.0).collect();
            series_patterns(&active, set.beta_pl)
        })
        .collect();

    let mut points = Vec::with_capacity(count as usize);
    // odometer over (pv pattern, bus 0 pattern, ..., bus nb-1 pattern)
    let radices: Vec<usize> = std::iter::once(pv_patterns.len())
        .chain(bus_patterns.iter().map(|p| p.len()))
        .collect();
    let mut idx = vec![0usize; radices.len()];
    loop {
        let mut ep = ExtremePoint::nominal(nb, t);
        for &(slot, sign) in &pv_patterns[idx[0]] {
            if sign > 0 {
                ep.u_plus[slot] = true;
            } else {
                ep.u_minus[slot] = true;
            }
        }
        for i in 0..nb {
            for &(slot, sign) in &bus_patterns[i][idx[i + 1]] {
                if sign > 0 {
                    ep.v_plus[i][slot] = true;
                } else {
                    ep.v_minus[i][slot] = true;
                }
            }
        }
        points.push(ep);

        // advance odometer
        let mut pos = radices.len();
        loop {
            if pos == 0 {
                return Ok(points);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < radices[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}
