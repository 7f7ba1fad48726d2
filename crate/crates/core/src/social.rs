//! Socially optimal traffic split by marginal-cost equalization.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Allocation, CostModel, Scenario, SourceModel};
use crate::numeric::{fabs, illinois, invert_increasing};

/// Evidence that an allocation meets the equal-marginal conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityCertificate {
    pub c_star: f64,
    pub residual: f64,
    /// Relay indices carrying positive traffic.
    pub active: Vec<usize>,
}

/// Solver controls. `bracket` overrides the automatic `c*` bracket and must
/// still straddle the root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocialOptions {
    pub bracket: Option<(f64, f64)>,
    pub max_iterations: usize,
}

impl Default for SocialOptions {
    fn default() -> Self {
        SocialOptions {
            bracket: None,
            max_iterations: 400,
        }
    }
}

/// A strictly increasing marginal curve on `[0, cap]`.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Curve {
    Link {
        cost: CostModel,
        theta: f64,
        cap: f64,
    },
    Virtual {
        cost: CostModel,
        theta: f64,
        hazard: f64,
        cap: f64,
    },
    Overflow(SourceModel),
}

impl Curve {
    #[inline]
    fn cap(&self) -> f64 {
        match *self {
            Curve::Link { cap, .. } | Curve::Virtual { cap, .. } => cap,
            Curve::Overflow(s) => s.rate(),
        }
    }

    #[inline]
    pub(crate) fn marginal(&self, r: f64) -> f64 {
        match *self {
            Curve::Link { cost, theta, .. } => cost.marginal(theta, r),
            Curve::Virtual {
                cost, theta, hazard, ..
            } => cost.virtual_profile(theta, r, hazard).1,
            Curve::Overflow(s) => s.overflow_marginal(r),
        }
    }

    #[inline]
    fn slope(&self, r: f64) -> f64 {
        match *self {
            Curve::Link { cost, theta, .. } => cost.marginal_slope(theta, r),
            Curve::Virtual {
                cost, theta, hazard, ..
            } => cost.virtual_profile(theta, r, hazard).2,
            Curve::Overflow(s) => s.overflow_slope(r),
        }
    }

    fn rate_at(&self, c: f64) -> f64 {
        let cap = self.cap();
        invert_increasing(
            |r| self.marginal(r),
            |r| self.slope(r),
            c,
            0.0,
            cap,
            1e-15 * cap.max(1.0),
        )
    }
}

/// Rates `r_k` with equal marginals on every active curve and `Σ r_k = total`.
/// Returns the rates and the common marginal.
pub(crate) fn equalize(
    curves: &[Curve],
    total: f64,
    bracket: Option<(f64, f64)>,
    max_iterations: usize,
) -> Result<(Vec<f64>, f64)> {
    if curves.len() == 1 {
        let c = curves[0].marginal(total);
        return Ok((alloc::vec![total], c));
    }
    if curves.len() == 2 && bracket.is_none() {
        return Ok(equalize_pair(&curves[0], &curves[1], total));
    }
    let (lo, hi) = match bracket {
        Some(b) => b,
        None => {
            let floor = curves.iter().map(|c| c.marginal(0.0)).fold(f64::INFINITY, f64::min);
            let ceil = curves
                .iter()
                .map(|c| c.marginal(c.cap()))
                .fold(f64::NEG_INFINITY, f64::max);
            (floor - 1e-3 * fabs(floor), ceil)
        }
    };
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::NoConvergence {
            method: "marginal equalization",
            iterations: 0,
            detail: format!("invalid marginal-cost bracket [{lo}, {hi}]"),
        });
    }
    let excess = |c: f64| curves.iter().map(|k| k.rate_at(c)).sum::<f64>() - total;
    let ftol = 4.0 * f64::EPSILON * total * curves.len() as f64;
    let c_star = illinois(excess, lo, hi, ftol, max_iterations)?;

    let mut rates: Vec<f64> = curves.iter().map(|k| k.rate_at(c_star)).collect();
    // first-order correction of the leftover excess along the active set
    let gap = rates.iter().sum::<f64>() - total;
    let inv: Vec<f64> = curves
        .iter()
        .zip(&rates)
        .map(|(k, &r)| if r > 0.0 && r < k.cap() { 1.0 / k.slope(r) } else { 0.0 })
        .collect();
    let inv_sum: f64 = inv.iter().sum();
    if inv_sum > 0.0 && gap != 0.0 {
        for (r, w) in rates.iter_mut().zip(&inv) {
            *r = (*r - gap * w / inv_sum).max(0.0);
        }
    }
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
    rates[imax] = (total - rest).max(0.0);
    Ok((rates, c_star))
}

/// Two links: solve `m_0(r) = m_1(total - r)` directly in `r`.
fn equalize_pair(a: &Curve, b: &Curve, total: f64) -> (Vec<f64>, f64) {
    let hi = total.min(a.cap());
    let lo = (total - b.cap()).max(0.0);
    let r = invert_increasing(
        |r| a.marginal(r) - b.marginal(total - r),
        |r| a.slope(r) + b.slope(total - r),
        0.0,
        lo,
        hi,
        1e-15 * total.max(1.0),
    );
    let rest = total - r;
    let c = if r > 0.0 { a.marginal(r) } else { b.marginal(rest) };
    (alloc::vec![r, rest], c)
}

fn curves_for(scenario: &Scenario, theta: &[f64]) -> Vec<Curve> {
    let cap = scenario.rate();
    let mut curves = Vec::with_capacity(scenario.len() + 1);
    if scenario.source().is_elastic() {
        curves.push(Curve::Overflow(*scenario.source()));
    }
    curves.extend(scenario.relays().iter().zip(theta).map(|(relay, &t)| Curve::Link {
        cost: relay.cost,
        theta: t,
        cap,
    }));
    curves
}

pub(crate) fn split(scenario: &Scenario, rates: Vec<f64>) -> Allocation {
    if scenario.source().is_elastic() {
        Allocation {
            withheld: rates[0],
            rates: rates[1..].to_vec(),
        }
    } else {
        Allocation { withheld: 0.0, rates }
    }
}

/// The allocation minimizing total network cost, with its certificate.
pub fn solve_social_optimum(scenario: &Scenario, theta: &[f64]) -> Result<(Allocation, OptimalityCertificate)> {
    solve_social_optimum_with(scenario, theta, &SocialOptions::default())
}

pub fn solve_social_optimum_with(
    scenario: &Scenario,
    theta: &[f64],
    options: &SocialOptions,
) -> Result<(Allocation, OptimalityCertificate)> {
    scenario.check_types(theta)?;
    let curves = curves_for(scenario, theta);
    let (rates, c_star) = equalize(&curves, scenario.rate(), options.bracket, options.max_iterations)?;
    let allocation = split(scenario, rates);
    allocation.check_for(scenario)?;
    let residual = kkt_residual(scenario, theta, &allocation)?;
    let active = allocation
        .rates
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok((
        allocation,
        OptimalityCertificate {
            c_star,
            residual,
            active,
        },
    ))
}

/// `C_s(θ_s, r_0) + Σ C_i(θ_i, r_i)`.
pub fn total_cost(scenario: &Scenario, theta: &[f64], allocation: &Allocation) -> Result<f64> {
    scenario.check_types(theta)?;
    allocation.check_for(scenario)?;
    let mut sum = scenario.source().overflow_cost(allocation.withheld);
    for ((relay, &t), &r) in scenario.relays().iter().zip(theta).zip(&allocation.rates) {
        sum += crate::model::cost_eval(&relay.cost, t, r)?;
    }
    Ok(sum)
}

/// Spread of active marginals around their median plus the largest amount by
/// which an idle link's marginal at zero undercuts that median.
pub fn kkt_residual(scenario: &Scenario, theta: &[f64], allocation: &Allocation) -> Result<f64> {
    scenario.check_types(theta)?;
    allocation.check_for(scenario)?;
    let mut links: Vec<(f64, f64)> = Vec::with_capacity(scenario.len() + 1);
    if scenario.source().is_elastic() {
        let s = scenario.source();
        links.push((s.overflow_marginal(allocation.withheld), s.overflow_marginal(0.0)));
    }
    for ((relay, &t), &r) in scenario.relays().iter().zip(theta).zip(&allocation.rates) {
        links.push((relay.cost.marginal(t, r), relay.cost.marginal(t, 0.0)));
    }
    let mut rates: Vec<f64> = Vec::with_capacity(links.len());
    if scenario.source().is_elastic() {
        rates.push(allocation.withheld);
    }
    rates.extend_from_slice(&allocation.rates);
    Ok(residual_of(&links, &rates))
}

/// `links[k] = (marginal at r_k, marginal at 0)`.
pub(crate) fn residual_of(links: &[(f64, f64)], rates: &[f64]) -> f64 {
    let mut active: Vec<f64> = links
        .iter()
        .zip(rates)
        .filter(|(_, r)| **r > 0.0)
        .map(|(l, _)| l.0)
        .collect();
    if active.is_empty() {
        return 0.0;
    }
    active.sort_by(f64::total_cmp);
    let m = active.len();
    let median = if m % 2 == 1 {
        active[m / 2]
    } else {
        0.5 * (active[m / 2 - 1] + active[m / 2])
    };
    let spread = active.iter().map(|c| fabs(c - median)).fold(0.0, f64::max);
    let idle = links
        .iter()
        .zip(rates)
        .filter(|(_, r)| **r <= 0.0)
        .map(|(l, _)| (median - l.1).max(0.0))
        .fold(0.0, f64::max);
    spread + idle
}
