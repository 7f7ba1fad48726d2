//! Price of anarchy: per-realization ratios, theoretical bounds, Monte Carlo
//! sweeps and the small-rate probe.

use alloc::format;
use alloc::vec::Vec;

use crate::bargaining::{solve_virtual_allocation, VirtualCostView};
use crate::error::{Error, Result};
use crate::model::{sample_types, Allocation, Scenario};
use crate::numeric::{fabs, linspace};
use crate::pricing::{solve_asymmetric_bne, winner_allocation, BneSolution, ShootingConfig};
use crate::social::{solve_social_optimum, total_cost};

/// Which bound applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// `n`, for concave marginal costs.
    RelayCount,
    /// `k = c(θ̲, r_s)/c(θ̄, 0)`.
    MarginalRatio,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub kind: BoundKind,
}

/// Equilibrium cost over optimal cost at one type vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PoAReport {
    pub rho: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub bound: Option<Bound>,
    pub theta: Vec<f64>,
}

/// Outcome of the bound preconditions on a symmetric scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub concave_marginal: bool,
    pub linear_marginal: bool,
    /// `c(θ̲, r_s)/c(θ̄, 0)` when finite.
    pub k: Option<f64>,
    /// Tightest bound for the pricing game.
    pub pricing: Option<Bound>,
    /// Virtual-cost conditions: `J` convex in `r` and decreasing in `θ`;
    /// `X = J - C` concave in `r`; `∂²X/∂θ∂r ≤ 0`.
    pub virtual_conditions: [bool; 3],
    /// Bound for the bargaining game, present only when all virtual
    /// conditions hold.
    pub bargaining: Option<Bound>,
}

fn require_symmetric(scenario: &Scenario, what: &str) -> Result<()> {
    if !scenario.is_symmetric() {
        return Err(Error::Unsupported(format!("{what} needs identical relays")));
    }
    Ok(())
}

/// Probes the bound preconditions on a type-by-rate grid.
pub fn theoretical_bound(scenario: &Scenario) -> Result<BoundReport> {
    require_symmetric(scenario, "the efficiency bound")?;
    let relay = scenario.relay(0);
    let cost = relay.cost;
    let dist = relay.dist;
    let rate = scenario.rate();
    let (lo, hi) = dist.support();
    let n = scenario.len() as f64;
    let view = VirtualCostView::new(cost, dist);
    let thetas: Vec<f64> = (0..20).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / 20.0).collect();
    let rates = linspace(0.0, rate, 200);

    let mut concave = true;
    let mut linear = true;
    for &t in &thetas {
        let c: Vec<f64> = rates.iter().map(|&r| cost.marginal(t, r)).collect();
        for w in c.windows(3) {
            let d2 = w[2] - 2.0 * w[1] + w[0];
            let tol = 1e-9 * (1.0 + fabs(w[1]));
            concave &= d2 <= tol;
            linear &= fabs(d2) <= tol;
        }
    }
    let top = cost.marginal(hi, 0.0);
    let ratio = cost.marginal(lo, rate) / top;
    let k = (top > 0.0 && ratio.is_finite()).then_some(ratio);
    let mut pricing = k.map(|value| Bound {
        value,
        kind: BoundKind::MarginalRatio,
    });
    if concave && pricing.is_none_or(|b| n < b.value) {
        pricing = Some(Bound {
            value: n,
            kind: BoundKind::RelayCount,
        });
    }

    let coarse = linspace(0.0, rate, 50);
    let j = |t: f64, r: f64| view.value(t, r).unwrap_or(f64::NAN);
    let x = |t: f64, r: f64| j(t, r) - cost.cost(view.effective_type(t), r);
    let mut conds = [true; 3];
    for (a, &t) in thetas.iter().enumerate() {
        for w in coarse.windows(3) {
            let (j0, j1, j2) = (j(t, w[0]), j(t, w[1]), j(t, w[2]));
            conds[0] &= j2 - 2.0 * j1 + j0 >= -1e-9 * (1.0 + fabs(j1));
            let (x0, x1, x2) = (x(t, w[0]), x(t, w[1]), x(t, w[2]));
            conds[1] &= x2 - 2.0 * x1 + x0 <= 1e-9 * (1.0 + fabs(x1));
        }
        if let Some(&u) = thetas.get(a + 1) {
            for w in coarse.windows(2) {
                let r = w[1];
                conds[0] &= j(u, r) <= j(t, r) + 1e-9 * (1.0 + fabs(j(t, r)));
                let mixed = x(u, w[1]) - x(u, w[0]) - x(t, w[1]) + x(t, w[0]);
                conds[2] &= mixed <= 1e-9 * (1.0 + fabs(x(t, w[1])));
            }
        }
    }
    let bargaining = if conds.iter().all(|&c| c) { pricing } else { None };
    Ok(BoundReport {
        concave_marginal: concave,
        linear_marginal: linear,
        k,
        pricing,
        virtual_conditions: conds,
        bargaining,
    })
}

fn ratio(scenario: &Scenario, theta: &[f64], numerator: f64, bound: Option<Bound>) -> Result<PoAReport> {
    let (opt, _) = solve_social_optimum(scenario, theta)?;
    let denominator = total_cost(scenario, theta, &opt)?;
    let rho = if numerator == denominator {
        1.0
    } else {
        numerator / denominator
    };
    Ok(PoAReport {
        rho,
        numerator,
        denominator,
        bound,
        theta: theta.to_vec(),
    })
}

/// Winner-take-all cost of the highest type over the optimal cost, for the
/// symmetric inelastic pricing game.
pub fn poa_pricing(scenario: &Scenario, theta: &[f64]) -> Result<PoAReport> {
    require_symmetric(scenario, "pricing price of anarchy")?;
    if scenario.source().is_elastic() {
        return Err(Error::Unsupported(
            "pricing price of anarchy needs an inelastic source".into(),
        ));
    }
    scenario.check_types(theta)?;
    let bound = theoretical_bound(scenario)?.pricing;
    pricing_report(scenario, theta, bound)
}

fn pricing_report(scenario: &Scenario, theta: &[f64], bound: Option<Bound>) -> Result<PoAReport> {
    let top = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let numerator = scenario.relay(0).cost.cost(top, scenario.rate());
    ratio(scenario, theta, numerator, bound)
}

/// True cost of the virtual-cost allocation (worst over grid ties) over the
/// optimal cost.
pub fn poa_bargaining(scenario: &Scenario, theta: &[f64]) -> Result<PoAReport> {
    let bound = if scenario.is_symmetric() {
        theoretical_bound(scenario)?.bargaining
    } else {
        None
    };
    bargaining_report(scenario, theta, bound)
}

fn bargaining_report(scenario: &Scenario, theta: &[f64], bound: Option<Bound>) -> Result<PoAReport> {
    let solution = solve_virtual_allocation(scenario, theta)?;
    let mut numerator = f64::NEG_INFINITY;
    for candidate in &solution.candidates {
        numerator = numerator.max(true_cost(scenario, theta, candidate)?);
    }
    ratio(scenario, theta, numerator, bound)
}

fn true_cost(scenario: &Scenario, theta: &[f64], allocation: &Allocation) -> Result<f64> {
    let mut sum = scenario.source().overflow_cost(allocation.withheld);
    for ((relay, &t), &r) in scenario.relays().iter().zip(theta).zip(&allocation.rates) {
        sum += relay.cost.cost(t, r);
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Pricing,
    Bargaining,
}

/// Distribution of `ρ(θ)` over sampled type vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PoaSummary {
    pub samples: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub p90: f64,
    pub p99: f64,
    pub bound: Option<Bound>,
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = libm::ceil(q * n as f64).max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

pub fn monte_carlo_expected_poa(scenario: &Scenario, mode: Mode, samples: usize, seed: u64) -> Result<PoaSummary> {
    if samples == 0 {
        return Err(Error::Config("at least one sample is required".into()));
    }
    let bound = match mode {
        Mode::Pricing => {
            require_symmetric(scenario, "pricing price of anarchy")?;
            if scenario.source().is_elastic() {
                return Err(Error::Unsupported(
                    "pricing price of anarchy needs an inelastic source".into(),
                ));
            }
            theoretical_bound(scenario)?.pricing
        }
        Mode::Bargaining if scenario.is_symmetric() => theoretical_bound(scenario)?.bargaining,
        Mode::Bargaining => None,
    };
    let draws = sample_types(scenario, samples, seed);
    let mut rhos = Vec::with_capacity(samples);
    for theta in &draws {
        let report = match mode {
            Mode::Pricing => pricing_report(scenario, theta, bound)?,
            Mode::Bargaining => bargaining_report(scenario, theta, bound)?,
        };
        rhos.push(report.rho);
    }
    let mean = rhos.iter().sum::<f64>() / samples as f64;
    rhos.sort_by(f64::total_cmp);
    Ok(PoaSummary {
        samples,
        mean,
        min: rhos[0],
        max: rhos[samples - 1],
        median: quantile(&rhos, 0.5),
        p90: quantile(&rhos, 0.9),
        p99: quantile(&rhos, 0.99),
        bound,
    })
}

/// Controls for [`asymptotic_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions {
    /// Fixed type vector for symmetric scenarios; sampled when `None`.
    pub types: Option<Vec<f64>>,
    pub samples: usize,
    pub seed: u64,
    /// Interior own-type points used to locate crossing realizations.
    pub crossings: usize,
    pub shooting: ShootingConfig,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            types: None,
            samples: 200,
            seed: 0,
            crossings: 40,
            shooting: ShootingConfig::default(),
        }
    }
}

/// `ρ` statistics at one source rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub rate: f64,
    pub realizations: usize,
    pub rho_min: f64,
    pub rho_mean: f64,
    pub rho_max: f64,
    /// For asymmetric scenarios, the largest `ρ` at the same realizations
    /// when the highest type wins instead; `NaN` for symmetric scenarios.
    pub counterpart_max: f64,
    /// Largest `|w_1(p) - w_2(p)|` seen; zero for symmetric scenarios.
    pub max_gap: f64,
}

/// `ρ` along a decreasing sequence of source rates. Symmetric scenarios use
/// the winner-take-all ratio at sampled (or fixed) types; two-relay
/// asymmetric scenarios solve the equilibrium at each rate and evaluate `ρ`
/// where both relays quote the same price at different types.
pub fn asymptotic_probe(scenario: &Scenario, rates: &[f64], options: &ProbeOptions) -> Result<Vec<ProbeRow>> {
    if rates.is_empty() {
        return Err(Error::Config("rate sequence is empty".into()));
    }
    if rates.iter().any(|&r| !(r > 0.0)) || rates.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config(
            "rate sequence must be positive and strictly decreasing".into(),
        ));
    }
    rates
        .iter()
        .map(|&rate| {
            let sc = scenario.with_rate(rate)?;
            if sc.is_symmetric() {
                symmetric_row(&sc, options)
            } else {
                let solution = solve_asymmetric_bne(&sc, &options.shooting)?;
                crossing_row(&sc, &solution, options)
            }
        })
        .collect()
}

fn summarize(rate: f64, rhos: &[f64], counterpart_max: f64, max_gap: f64) -> ProbeRow {
    let m = rhos.len();
    ProbeRow {
        rate,
        realizations: m,
        rho_min: rhos.iter().copied().fold(f64::INFINITY, f64::min),
        rho_mean: if m > 0 {
            rhos.iter().sum::<f64>() / m as f64
        } else {
            f64::NAN
        },
        rho_max: rhos.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        counterpart_max,
        max_gap,
    }
}

fn symmetric_row(scenario: &Scenario, options: &ProbeOptions) -> Result<ProbeRow> {
    let draws = match &options.types {
        Some(t) => alloc::vec![t.clone()],
        None => sample_types(scenario, options.samples.max(1), options.seed),
    };
    let rhos = draws
        .iter()
        .map(|t| poa_pricing_unbounded(scenario, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(scenario.rate(), &rhos, f64::NAN, 0.0))
}

fn poa_pricing_unbounded(scenario: &Scenario, theta: &[f64]) -> Result<f64> {
    scenario.check_types(theta)?;
    Ok(pricing_report(scenario, theta, None)?.rho)
}

/// Type pairs `(θ_1, w_2(p_1(θ_1)))` over interior `θ_1` whose gap is at least
/// half the largest gap.
pub fn crossing_realizations(scenario: &Scenario, solution: &BneSolution, points: usize) -> (Vec<[f64; 2]>, f64) {
    let first = scenario.relay(0).dist;
    let second = scenario.relay(1).dist;
    let (lo, hi) = first.support();
    let pairs: Vec<[f64; 2]> = (0..points.max(1))
        .map(|k| {
            let t = lo + (hi - lo) * (0.05 + 0.9 * k as f64 / (points.max(2) - 1) as f64);
            let p = solution.strategies[0].price(t);
            [t, solution.strategies[1].inverse(p, &second)]
        })
        .collect();
    let max_gap = pairs.iter().map(|w| fabs(w[0] - w[1])).fold(0.0, f64::max);
    let chosen = pairs
        .into_iter()
        .filter(|w| fabs(w[0] - w[1]) >= 0.5 * max_gap && max_gap > 0.0)
        .collect();
    (chosen, max_gap)
}

fn crossing_row(scenario: &Scenario, solution: &BneSolution, options: &ProbeOptions) -> Result<ProbeRow> {
    if scenario.len() != 2 {
        return Err(Error::Unsupported("crossing probe needs exactly two relays".into()));
    }
    let rate = scenario.rate();
    let (pairs, max_gap) = crossing_realizations(scenario, solution, options.crossings);
    let mut rhos = Vec::with_capacity(pairs.len());
    let mut counterpart: f64 = f64::NEG_INFINITY;
    for pair in pairs {
        let (low, high) = if pair[0] < pair[1] { (0, 1) } else { (1, 0) };
        let mut theta = pair.to_vec();
        // nudge the lower type up so its price is strictly the lowest
        theta[low] += 1e-6 * scenario.relay(low).dist.width();
        let prices: Vec<f64> = solution
            .strategies
            .iter()
            .zip(&theta)
            .map(|(s, &t)| s.price(t))
            .collect();
        let allocation = winner_allocation(&prices, scenario);
        let winner = if allocation.rates[low] > 0.0 { low } else { high };
        let numerator = scenario.relay(winner).cost.cost(theta[winner], rate);
        rhos.push(ratio(scenario, &theta, numerator, None)?.rho);
        let top = scenario.relay(high).cost.cost(theta[high], rate);
        counterpart = counterpart.max(ratio(scenario, &theta, top, None)?.rho);
    }
    Ok(summarize(rate, &rhos, counterpart, max_gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostFamily, CostModel, TypeDistribution};

    fn sc(family: CostFamily, a: f64, b: f64, n: usize) -> Scenario {
        Scenario::symmetric(CostModel::new(family), TypeDistribution::uniform(a, b).unwrap(), n, 1.0).unwrap()
    }

    #[test]
    fn linear_marginal_equal_types_reach_relay_count() {
        for n in [2, 3, 5] {
            let s = sc(CostFamily::QuadraticOverTheta, 1.0, 2.0, n);
            let r = poa_pricing(&s, &alloc::vec![1.3; n]).unwrap();
            assert!(fabs(r.rho - n as f64) < 1e-9);
            assert_eq!(r.bound.unwrap().kind, BoundKind::RelayCount);
        }
    }

    #[test]
    fn single_relay_is_efficient() {
        let s = sc(CostFamily::PowerExp, 1.0, 2.0, 1);
        assert_eq!(poa_pricing(&s, &[1.4]).unwrap().rho, 1.0);
    }

    #[test]
    fn marginal_ratio_bound() {
        let s = sc(CostFamily::ExpOverTheta, 0.5, 1.0, 3);
        let b = theoretical_bound(&s).unwrap();
        assert!(fabs(b.k.unwrap() - 2.0 * core::f64::consts::E) < 1e-12);
        assert!(!b.concave_marginal);
        let p = sc(CostFamily::PowerExp, 1.0, 2.0, 2);
        assert!(!theoretical_bound(&p).unwrap().concave_marginal);
        let q = theoretical_bound(&sc(CostFamily::QuadraticOverTheta, 1.0, 2.0, 2)).unwrap();
        assert!(q.linear_marginal);
    }

    #[test]
    fn asymmetric_pricing_unsupported() {
        let relays = alloc::vec![
            crate::model::Relay::new(
                CostModel::new(CostFamily::PowerExp),
                TypeDistribution::uniform(1.0, 2.0).unwrap()
            ),
            crate::model::Relay::new(
                CostModel::new(CostFamily::PowerExp),
                TypeDistribution::uniform(1.5, 2.0).unwrap()
            ),
        ];
        let s = Scenario::new(crate::model::SourceModel::Inelastic { rate: 1.0 }, relays).unwrap();
        assert!(matches!(poa_pricing(&s, &[1.6, 1.7]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn top_types_make_bargaining_efficient() {
        let s = sc(CostFamily::ExpOverTheta, 0.5, 1.0, 2);
        let r = poa_bargaining(&s, &[1.0, 1.0]).unwrap();
        assert!(fabs(r.rho - 1.0) < 1e-12);
    }

    #[test]
    fn probe_rejects_increasing_rates() {
        let s = sc(CostFamily::PowerExp, 1.0, 2.0, 2);
        assert!(asymptotic_probe(&s, &[0.1, 1.0], &ProbeOptions::default()).is_err());
    }
}
