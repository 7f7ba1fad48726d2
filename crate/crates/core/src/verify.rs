//! Independent oracles: exhaustive allocation search, best-response
//! deviation search, cost-assumption audits and ODE residuals.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{cost_eval, Allocation, CostModel, PricingStrategy, Scenario, TypeDistribution};
use crate::numeric::fabs;
use crate::pricing::{asymmetric_ode_rhs, expected_profit};

/// Best point of an exhaustive simplex-grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSearch {
    pub value: f64,
    pub rates: Vec<f64>,
    /// Grid points whose objective came within `1e-9` (relative) of the best
    /// seen at the time they were visited.
    pub near_best: Vec<(f64, Vec<f64>)>,
}

/// Minimizes `Σ_k cost_k(r_k)` over `r_k = m_k·total/cells`, `Σ m_k = cells`.
pub fn simplex_minimize(costs: &[&dyn Fn(f64) -> f64], total: f64, cells: usize) -> Result<SimplexSearch> {
    if costs.is_empty() || cells == 0 {
        return Err(Error::Config(
            "simplex search needs at least one link and one cell".into(),
        ));
    }
    let step = total / cells as f64;
    let tables: Vec<Vec<f64>> = costs
        .iter()
        .map(|c| (0..=cells).map(|m| c(step * m as f64)).collect())
        .collect();
    let links = costs.len();
    let mut best = SimplexSearch {
        value: f64::INFINITY,
        rates: Vec::new(),
        near_best: Vec::new(),
    };
    let mut counts = alloc::vec![0usize; links];
    // with non-negative costs a partial sum above the best cannot recover
    let prune = tables.iter().flatten().all(|&v| v >= 0.0);
    search(&tables, 0, cells, 0.0, &mut counts, &mut best, step, prune);
    if !best.value.is_finite() {
        return Err(Error::NoConvergence {
            method: "simplex grid search",
            iterations: cells,
            detail: "no grid point has finite cost".into(),
        });
    }
    let tol = 1e-9 * (1.0 + fabs(best.value));
    let value = best.value;
    best.near_best.retain(|(v, _)| *v <= value + tol);
    Ok(best)
}

#[allow(clippy::too_many_arguments)]
fn search(
    tables: &[Vec<f64>],
    k: usize,
    left: usize,
    acc: f64,
    counts: &mut [usize],
    best: &mut SimplexSearch,
    step: f64,
    prune: bool,
) {
    if k + 1 == tables.len() {
        counts[k] = left;
        let v = acc + tables[k][left];
        let tol = 1e-9 * (1.0 + fabs(best.value.min(v)));
        if v < best.value - tol {
            best.near_best.clear();
        }
        if v <= best.value + tol {
            let rates = to_rates(counts, step);
            best.near_best.push((v, rates.clone()));
            if v < best.value {
                best.value = v;
                best.rates = rates;
            }
        }
        return;
    }
    for m in 0..=left {
        let v = acc + tables[k][m];
        if prune && v > best.value + 1e-9 * (1.0 + fabs(best.value)) {
            continue;
        }
        counts[k] = m;
        search(tables, k + 1, left - m, v, counts, best, step, prune);
    }
}

fn to_rates(counts: &[usize], step: f64) -> Vec<f64> {
    counts.iter().map(|&m| step * m as f64).collect()
}

/// Exhaustive search over allocations on a grid of spacing `resolution`,
/// using only direct cost evaluation. Supports up to four relays.
pub fn brute_force_allocation(scenario: &Scenario, theta: &[f64], resolution: f64) -> Result<Allocation> {
    if scenario.len() > 4 {
        return Err(Error::Unsupported(format!(
            "exhaustive search supports at most 4 relays, got {}",
            scenario.len()
        )));
    }
    scenario.check_types(theta)?;
    let rate = scenario.rate();
    let cells = libm::round(rate / resolution);
    if !(resolution > 0.0) || cells < 1.0 || fabs(cells * resolution - rate) > 1e-9 * rate {
        return Err(Error::Config(format!(
            "resolution {resolution} does not divide r_s = {rate}"
        )));
    }
    let cells = cells as usize;
    let source = *scenario.source();
    let overflow = move |r: f64| source.overflow_cost(r);
    let relay_costs: Vec<_> = scenario
        .relays()
        .iter()
        .zip(theta)
        .map(|(relay, &t)| {
            let cost = relay.cost;
            move |r: f64| cost_eval(&cost, t, r).unwrap_or(f64::INFINITY)
        })
        .collect();
    let mut costs: Vec<&dyn Fn(f64) -> f64> = Vec::new();
    if source.is_elastic() {
        costs.push(&overflow);
    }
    for c in &relay_costs {
        costs.push(c);
    }
    let found = simplex_minimize(&costs, rate, cells)?;
    let mut rates = found.rates;
    // restore the exact total on the largest coordinate
    let (imax, _) = rates.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc },
    );
    let rest: f64 = rates
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != imax)
        .map(|(_, r)| r)
        .sum();
    rates[imax] = rate - rest;
    Ok(crate::social::split(scenario, rates))
}

/// `max_{p ∈ grid} π_i(θ_i, p) - π_i(θ_i, p_i(θ_i))` under the given strategies.
pub fn best_response_gain(
    scenario: &Scenario,
    strategies: &[PricingStrategy],
    i: usize,
    theta_i: f64,
    price_grid: &[f64],
) -> f64 {
    let own = strategies[i].price(theta_i);
    best_response_gain_at(scenario, strategies, i, theta_i, own, price_grid)
}

/// [`best_response_gain`] measured against an arbitrary own price.
pub fn best_response_gain_at(
    scenario: &Scenario,
    strategies: &[PricingStrategy],
    i: usize,
    theta_i: f64,
    own_price: f64,
    price_grid: &[f64],
) -> f64 {
    let base = expected_profit(scenario, i, theta_i, own_price, strategies);
    price_grid
        .iter()
        .map(|&p| expected_profit(scenario, i, theta_i, p, strategies) - base)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest profit gain relay `i` can obtain by moving its linear price to a
/// grid value while the others keep `prices` and the source best-responds.
/// Undercutting wins all served traffic; overpricing wins none.
pub fn price_deviation_gain(
    scenario: &Scenario,
    theta: &[f64],
    prices: &[f64],
    allocation: &Allocation,
    i: usize,
    grid: &[f64],
) -> f64 {
    let relay = scenario.relay(i);
    let t = theta[i];
    let profit = |p: f64, r: f64| p * r - relay.cost.cost(t, r);
    let base = profit(prices[i], allocation.rates[i]);
    let rival = prices
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, &p)| p)
        .fold(f64::INFINITY, f64::min);
    grid.iter()
        .map(|&p| {
            let dev = if p < rival {
                let (withheld, _) = scenario.source().withheld_response(p);
                profit(p, scenario.rate() - withheld)
            } else if p > rival {
                0.0
            } else if p == prices[i] {
                base
            } else {
                0.0
            };
            dev - base
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// One audited assumption and its worst grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub assumption: &'static str,
    /// `(θ, r)` of the worst violation.
    pub location: (f64, f64),
    /// Amount by which the assumption fails there; zero when it holds.
    pub magnitude: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub pass: bool,
}

impl AuditReport {
    pub fn entry(&self, assumption: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.assumption == assumption)
    }
}

/// Finite-difference audit of a cost model on an interior `types × rates`
/// grid. Requires at least 20 points each way.
pub fn assumption_audit(
    cost: &CostModel,
    dist: &TypeDistribution,
    rate: f64,
    grid: (usize, usize),
) -> Result<AuditReport> {
    let c = *cost;
    assumption_audit_fn(move |t, r| c.cost(t, r), dist, rate, grid)
}

/// [`assumption_audit`] for an arbitrary cost function `C(θ, r)`.
pub fn assumption_audit_fn<C>(cost: C, dist: &TypeDistribution, rate: f64, grid: (usize, usize)) -> Result<AuditReport>
where
    C: Fn(f64, f64) -> f64,
{
    let (nt, nr) = grid;
    if nt < 20 || nr < 20 {
        return Err(Error::Config(format!(
            "audit grid must be at least 20x20, got {nt}x{nr}"
        )));
    }
    let (lo, hi) = dist.support();
    let width = hi - lo;
    let thetas: Vec<f64> = (0..nt).map(|k| lo + width * (k as f64 + 0.5) / nt as f64).collect();
    let rates: Vec<f64> = (1..=nr).map(|k| rate * k as f64 / nr as f64).collect();

    let names = [
        "zero-at-origin",
        "increasing-in-rate",
        "convex-in-rate",
        "decreasing-in-type",
        "cross-partial",
        "positive-density",
    ];
    let tols = [1e-12, 0.0, 0.0, 0.0, 1e-6, 0.0];
    // (magnitude, location); strict inequalities that fail with equality get
    // the smallest positive magnitude
    let mut worst = [(0.0f64, (f64::NAN, f64::NAN)); 6];
    let mut note = |k: usize, mag: f64, at: (f64, f64)| {
        let mag = if mag.is_nan() { f64::INFINITY } else { mag };
        if mag > worst[k].0 {
            worst[k] = (mag, at);
        }
    };
    let strict = |v: f64| if v > 0.0 { 0.0 } else { (-v).max(f64::MIN_POSITIVE) };

    for &t in &thetas {
        note(0, fabs(cost(t, 0.0)), (t, 0.0));
        note(5, strict(dist.pdf(t)), (t, 0.0));
        let ht = 1e-5 * fabs(t).max(width);
        let ht2 = 1e-4 * fabs(t).max(width);
        for &r in &rates {
            let hr = 1e-5 * r.max(rate);
            let hr2 = 1e-4 * r.max(rate);
            let scale = fabs(cost(t, r));
            let dr = (cost(t, r + hr) - cost(t, r - hr)) / (2.0 * hr);
            note(1, strict(dr), (t, r));
            let drr = (cost(t, r + hr2) - 2.0 * cost(t, r) + cost(t, r - hr2)) / (hr2 * hr2);
            note(2, strict(drr), (t, r));
            let dt = (cost(t + ht, r) - cost(t - ht, r)) / (2.0 * ht);
            note(3, strict(-dt), (t, r));
            let dtr = (cost(t + ht2, r + hr2) - cost(t + ht2, r - hr2) - cost(t - ht2, r + hr2)
                + cost(t - ht2, r - hr2))
                / (4.0 * ht2 * hr2);
            note(4, (dtr / (1.0 + scale)).max(0.0), (t, r));
        }
    }
    let entries: Vec<AuditEntry> = (0..6)
        .map(|k| AuditEntry {
            assumption: names[k],
            location: worst[k].1,
            magnitude: worst[k].0,
            tolerance: tols[k],
        })
        .collect();
    let pass = entries.iter().all(|e| e.magnitude <= e.tolerance);
    Ok(AuditReport { entries, pass })
}

/// Sup-norm gap between a numerically differentiated inverse strategy and
/// the symmetric first-order system, over grid types outside 1% bands at both
/// support ends. Derivatives use centered differences with step `1e-5` of
/// the support width.
pub fn ode_residual(
    strategy: &PricingStrategy,
    cost: &CostModel,
    dist: &TypeDistribution,
    n: usize,
    rate: f64,
    grid: &[f64],
) -> Result<f64> {
    ode_residual_fn(|t| strategy.price(t), cost, dist, n, rate, grid)
}

pub fn ode_residual_fn<P>(
    price: P,
    cost: &CostModel,
    dist: &TypeDistribution,
    n: usize,
    rate: f64,
    grid: &[f64],
) -> Result<f64>
where
    P: Fn(f64) -> f64,
{
    if n < 2 {
        return Err(Error::domain(
            "n",
            n as f64,
            "the first-order system needs at least two relays",
        ));
    }
    let scenario = Scenario::symmetric(*cost, *dist, n, rate)?;
    let (lo, hi) = dist.support();
    let width = hi - lo;
    let h = 1e-5 * width;
    let mut worst: f64 = 0.0;
    for &t in grid {
        if t < lo + 0.01 * width || t > hi - 0.01 * width {
            continue;
        }
        let p = price(t);
        let dp = (price(t + h) - price(t - h)) / (2.0 * h);
        let dw = 1.0 / dp;
        let rhs = match asymmetric_ode_rhs(p, &alloc::vec![t; n], &scenario) {
            Ok(v) => v[0],
            Err(e) if e.is_numeric() => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        };
        let gap = fabs(dw - rhs);
        worst = if gap.is_nan() { f64::INFINITY } else { worst.max(gap) };
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostFamily, SourceModel};
    use alloc::vec;

    #[test]
    fn symmetric_pair_splits_evenly_on_grid() {
        let sc = Scenario::symmetric(
            CostModel::new(CostFamily::PowerExp),
            TypeDistribution::uniform(1.0, 2.0).unwrap(),
            2,
            1.0,
        )
        .unwrap();
        let a = brute_force_allocation(&sc, &[1.5, 1.5], 1e-3).unwrap();
        assert!(fabs(a.rates[0] - 0.5) <= 1e-3);
        assert!(brute_force_allocation(&sc, &[1.5, 1.5], 0.3).is_err());
    }

    #[test]
    fn too_many_relays_unsupported() {
        let sc = Scenario::symmetric(
            CostModel::new(CostFamily::PowerExp),
            TypeDistribution::uniform(1.0, 2.0).unwrap(),
            5,
            1.0,
        )
        .unwrap();
        let err = brute_force_allocation(&sc, &[1.5; 5], 0.1).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn elastic_grid_search_includes_overflow() {
        let relays = vec![crate::model::Relay::new(
            CostModel::new(CostFamily::QuadraticOverTheta),
            TypeDistribution::uniform(0.5, 1.0).unwrap(),
        )];
        let sc = Scenario::new(
            SourceModel::Elastic {
                rate: 2.0,
                theta_s: 1.0,
            },
            relays,
        )
        .unwrap();
        let a = brute_force_allocation(&sc, &[0.5], 1e-3).unwrap();
        assert!(a.withheld > 0.0);
        assert!(fabs(a.withheld + a.rates[0] - 2.0) < 1e-12);
    }

    #[test]
    fn audit_passes_built_in_and_rejects_flipped_type() {
        let d = TypeDistribution::uniform(1.0, 2.0).unwrap();
        let rep = assumption_audit(&CostModel::new(CostFamily::PowerExp), &d, 1.0, (20, 20)).unwrap();
        assert!(rep.pass, "{rep:?}");
        let bad = assumption_audit_fn(|t, r| t * (libm::exp2(r) - 1.0), &d, 1.0, (20, 20)).unwrap();
        assert!(!bad.pass);
        let e = bad.entry("decreasing-in-type").unwrap();
        assert!(e.magnitude > 0.0 && e.location.0 >= 1.0);
        assert!(assumption_audit(&CostModel::new(CostFamily::PowerExp), &d, 1.0, (5, 20)).is_err());
    }

    #[test]
    fn constant_strategy_fails_ode_check() {
        let c = CostModel::new(CostFamily::PowerExp);
        let d = TypeDistribution::uniform(1.0, 2.0).unwrap();
        let grid: Vec<f64> = (0..50).map(|k| 1.0 + k as f64 / 49.0).collect();
        assert!(ode_residual_fn(|_| 1.0, &c, &d, 2, 1.0, &grid).unwrap() > 0.1);
        assert!(ode_residual_fn(|_| 1.0, &c, &d, 1, 1.0, &grid).is_err());
    }
}
