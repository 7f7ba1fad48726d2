//! Equilibria of the pricing game: linear charges under complete information,
//! the symmetric Bayesian equilibrium in closed form, and asymmetric
//! equilibria by shooting on the common lowest price.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Allocation, CostModel, PriceTable, PricingStrategy, Scenario, TypeDistribution};
use crate::numeric::{adaptive_simpson, exp, fabs, linspace, log, pow};
use crate::social::solve_social_optimum;

const QUAD_TOL: f64 = 1e-10;
const QUAD_DEPTH: u32 = 40;

/// Linear prices equal to the optimal common marginal, and the optimal split.
pub fn complete_info_pricing_equilibrium(scenario: &Scenario, theta: &[f64]) -> Result<(Vec<f64>, Allocation)> {
    let (allocation, cert) = solve_social_optimum(scenario, theta)?;
    Ok((alloc::vec![cert.c_star; scenario.len()], allocation))
}

fn check_symmetric_args(cost: &CostModel, dist: &TypeDistribution, n: usize, rate: f64, theta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("n", 0.0, "at least one relay is required"));
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::domain("r_s", rate, "source rate must be positive"));
    }
    let (lo, hi) = dist.support();
    if !(theta >= lo && theta <= hi) {
        return Err(Error::domain("theta", theta, "type outside support"));
    }
    if cost.family() == crate::model::CostFamily::Mm1Delay && lo <= rate {
        return Err(Error::domain("r_s", rate, "M/M/1 capacity must exceed the source rate"));
    }
    Ok(())
}

fn lowest_type_price(cost: &CostModel, dist: &TypeDistribution, rate: f64) -> Result<f64> {
    let (lo, _) = dist.support();
    let p = cost.cost(lo, rate) / rate;
    if !p.is_finite() {
        return Err(Error::Singularity {
            price: p,
            reason: "cost of the lowest type is unbounded",
        });
    }
    Ok(p)
}

/// `∫_{θ̲}^{θ} F(x)^{n-1} ∂C(x, r_s)/∂x dx` to an absolute tolerance scaled by
/// `F(θ)^{n-1}`.
fn weighted_cost_slope_integral(
    cost: &CostModel,
    dist: &TypeDistribution,
    n: usize,
    rate: f64,
    theta: f64,
) -> Result<f64> {
    let (lo, _) = dist.support();
    let k = (n - 1) as f64;
    let scale = pow(dist.cdf(theta), k);
    let integrand = |x: f64| {
        let w = pow(dist.cdf(x), k);
        if w == 0.0 {
            0.0
        } else {
            w * cost.d_theta(x, rate)
        }
    };
    adaptive_simpson(integrand, lo, theta, QUAD_TOL * scale.min(1.0), QUAD_DEPTH).map_err(|e| match e {
        Error::NoConvergence { iterations, detail, .. } => Error::NoConvergence {
            method: "symmetric equilibrium quadrature",
            iterations,
            detail,
        },
        other => other,
    })
}

/// Symmetric equilibrium unit price
/// `p(θ) = (C(θ,r_s) - ∫ F^{n-1} ∂C/∂x dx / F(θ)^{n-1}) / r_s`,
/// equal to `C(θ̲, r_s)/r_s` at the lowest type and for a monopolist.
pub fn symmetric_bne_price(cost: &CostModel, dist: &TypeDistribution, n: usize, rate: f64, theta: f64) -> Result<f64> {
    check_symmetric_args(cost, dist, n, rate, theta)?;
    let (lo, _) = dist.support();
    if n == 1 || theta == lo {
        return lowest_type_price(cost, dist, rate);
    }
    let integral = weighted_cost_slope_integral(cost, dist, n, rate, theta)?;
    let weight = pow(dist.cdf(theta), (n - 1) as f64);
    let p = (cost.cost(theta, rate) - integral / weight) / rate;
    if !p.is_finite() {
        return Err(Error::Singularity {
            price: p,
            reason: "equilibrium price is unbounded",
        });
    }
    Ok(p)
}

/// Expected equilibrium profit `v(θ) = -∫_{θ̲}^{θ} F^{n-1} ∂C/∂x dx`.
pub fn symmetric_value_function(
    cost: &CostModel,
    dist: &TypeDistribution,
    n: usize,
    rate: f64,
    theta: f64,
) -> Result<f64> {
    check_symmetric_args(cost, dist, n, rate, theta)?;
    let (lo, _) = dist.support();
    if theta == lo {
        return Ok(0.0);
    }
    if n == 1 {
        let v = cost.cost(lo, rate) - cost.cost(theta, rate);
        return if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Singularity {
                price: f64::INFINITY,
                reason: "cost of the lowest type is unbounded",
            })
        };
    }
    Ok(-weighted_cost_slope_integral(cost, dist, n, rate, theta)?)
}

impl PricingStrategy {
    /// Closed-form symmetric equilibrium with an inverse table of
    /// `table_points` types.
    pub fn closed_form_symmetric(
        cost: CostModel,
        dist: TypeDistribution,
        n: usize,
        rate: f64,
        table_points: usize,
    ) -> Result<Self> {
        if table_points < 2 {
            return Err(Error::Config("strategy table needs at least two points".into()));
        }
        let (lo, hi) = dist.support();
        let thetas = linspace(lo, hi, table_points);
        let prices = thetas
            .iter()
            .map(|&t| symmetric_bne_price(&cost, &dist, n, rate, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(PricingStrategy::ClosedFormSymmetric {
            cost,
            dist,
            n,
            rate,
            table: PriceTable::new(thetas, prices)?,
        })
    }
}

fn margins(p: f64, w: &[f64], scenario: &Scenario, served: f64) -> Result<Vec<f64>> {
    let rate = scenario.rate();
    let mut out = Vec::with_capacity(w.len());
    for (relay, &wj) in scenario.relays().iter().zip(w) {
        let m = p * rate - relay.cost.cost(wj, served);
        if !(m > 0.0) {
            return Err(Error::Singularity {
                price: p,
                reason: "profit margin is not positive",
            });
        }
        out.push(m);
    }
    Ok(out)
}

fn check_ode_args(w: &[f64], scenario: &Scenario) -> Result<()> {
    if scenario.len() < 2 {
        return Err(Error::domain(
            "n",
            scenario.len() as f64,
            "equilibrium ODE needs two or more relays",
        ));
    }
    if w.len() != scenario.len() {
        return Err(Error::InvalidScenario(format!(
            "expected {} inverse-strategy values, got {}",
            scenario.len(),
            w.len()
        )));
    }
    for (relay, &wj) in scenario.relays().iter().zip(w) {
        let (lo, hi) = relay.dist.support();
        if !(wj >= lo && wj <= hi) || wj <= 0.0 {
            return Err(Error::domain("w", wj, "inverse strategy left the type support"));
        }
    }
    Ok(())
}

/// `dw_i/dp` from the first-order conditions of an inelastic pricing game:
/// `F_i/((n-1) f_i) · ((n-2) r_s/m_i - Σ_{j≠i} r_s/m_j)` with margins
/// `m_j = p·r_s - C_j(w_j, r_s)`.
pub fn asymmetric_ode_rhs(p: f64, w: &[f64], scenario: &Scenario) -> Result<Vec<f64>> {
    check_ode_args(w, scenario)?;
    let rate = scenario.rate();
    let m = margins(p, w, scenario, rate)?;
    let n = w.len();
    let k = (n - 1) as f64;
    let total: f64 = m.iter().map(|mj| rate / mj).sum();
    Ok(scenario
        .relays()
        .iter()
        .zip(w)
        .zip(&m)
        .map(|((relay, &wi), &mi)| {
            let own = rate / mi;
            let bracket = (k - 1.0) * own - (total - own);
            relay.dist.cdf_over_pdf(wi) / k * bracket
        })
        .collect())
}

/// Which derivative multiplies the rival terms of the elastic equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ElasticReading {
    /// `dr_s/dp`, which is zero since the source's peak rate does not depend on price.
    #[default]
    AsPrinted,
    /// `dr_0/dp`, the withheld-rate response.
    WithdrawnRateDerivative,
}

/// `dw_i/dp` for an elastic source whose withheld rate `r_0(p)` is its best
/// response to the unit price. Reduces to [`asymmetric_ode_rhs`] when nothing
/// is withheld.
pub fn elastic_ode_rhs(p: f64, w: &[f64], scenario: &Scenario, reading: ElasticReading) -> Result<Vec<f64>> {
    if !scenario.source().is_elastic() {
        return Err(Error::Unsupported("elastic equation needs an elastic source".into()));
    }
    check_ode_args(w, scenario)?;
    let rate = scenario.rate();
    let (r0, dr0) = scenario.source().withheld_response(p);
    let served = rate - r0;
    let d = margins(p, w, scenario, served)?;
    let n = w.len();
    let k = (n - 1) as f64;
    let rival_factor = match reading {
        ElasticReading::AsPrinted => 0.0,
        ElasticReading::WithdrawnRateDerivative => dr0,
    };
    let relays = scenario.relays();
    Ok((0..n)
        .map(|i| {
            let gap = p - relays[i].cost.marginal(w[i], served);
            let own = (-(k - 1.0) * served + dr0 * gap) / d[i];
            let rivals: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (rate + rival_factor * gap) / d[j])
                .sum();
            -relays[i].dist.cdf_over_pdf(w[i]) / k * (own + rivals)
        })
        .collect())
}

/// Controls for [`solve_asymmetric_bne`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingConfig {
    /// Initial bracket on `p_min`; derived from the zero-profit prices when `None`.
    pub p_min_bracket: Option<(f64, f64)>,
    /// Integration step in `ln p`.
    pub step: f64,
    /// Smallest step tried before a stage failure is classified as an event.
    pub min_step: f64,
    pub max_iterations: usize,
    /// Floor detection band as a fraction of each support width, and the
    /// relative bracket width at which bisection stops.
    pub boundary_tol: f64,
    pub max_steps: usize,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            p_min_bracket: None,
            step: 1e-3,
            min_step: 1e-12,
            max_iterations: 200,
            boundary_tol: 1e-8,
            max_steps: 5_000_000,
        }
    }
}

impl ShootingConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.min_step > 0.0 && self.min_step <= self.step) {
            return Err(Error::Config(format!(
                "integration step {} and minimum step {} must be positive and ordered",
                self.step, self.min_step
            )));
        }
        if let Some((a, b)) = self.p_min_bracket {
            if !(b > a && a > 0.0) {
                return Err(Error::Config(format!(
                    "p_min bracket [{a}, {b}] must be positive with width > 0"
                )));
            }
        }
        if !(self.boundary_tol > 0.0 && self.boundary_tol < 1.0) {
            return Err(Error::Config("boundary tolerance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Convergence record of a shooting solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BneDiagnostics {
    pub iterations: usize,
    /// Final `[low, high]` bracket on `p_min`.
    pub bracket: (f64, f64),
    /// `max_{i,j} |p_i(θ̄_i) - p_j(θ̄_j)|`.
    pub start_gap: f64,
    /// Per relay, `|p_i(θ̲_i)·r_s - C_i(θ̲_i, r_s)| / (p_i(θ̲_i)·r_s)` where the
    /// lowest-type cost is finite, otherwise the relative margin left at the
    /// floor crossing.
    pub boundary_residuals: Vec<f64>,
    /// Price at which the accepted trajectory reached the type floor.
    pub floor_price: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BneSolution {
    pub strategies: Vec<PricingStrategy>,
    pub p_min: f64,
    pub diagnostics: BneDiagnostics,
}

impl BneSolution {
    /// Inverse strategies `w_i(p)` clamped to each support.
    pub fn inverses(&self, p: f64, scenario: &Scenario) -> Vec<f64> {
        self.strategies
            .iter()
            .zip(scenario.relays())
            .map(|(s, r)| s.inverse(p, &r.dist))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    /// A relay reached its type floor first: `p_min` too high.
    High,
    /// A margin collapsed first: `p_min` too low.
    Low,
}

struct Trajectory {
    prices: Vec<f64>,
    types: Vec<Vec<f64>>,
    shot: Shot,
    floor_price: f64,
}

struct Shooter<'a> {
    scenario: &'a Scenario,
    config: &'a ShootingConfig,
    floors: Vec<f64>,
    /// Price above which no margin can vanish before a floor is reached.
    safe_price: f64,
}

enum StageError {
    Floor,
    Margin,
}

impl<'a> Shooter<'a> {
    fn new(scenario: &'a Scenario, config: &'a ShootingConfig) -> Self {
        let rate = scenario.rate();
        let floors: Vec<f64> = scenario
            .relays()
            .iter()
            .map(|r| {
                let (lo, _) = r.dist.support();
                lo + config.boundary_tol * r.dist.width()
            })
            .collect();
        let safe_price = scenario
            .relays()
            .iter()
            .zip(&floors)
            .map(|(r, &f)| r.cost.cost(f, rate) / rate)
            .fold(0.0, f64::max);
        Shooter {
            scenario,
            config,
            floors,
            safe_price,
        }
    }

    /// `dw/d(ln p)`.
    fn rhs(&self, s: f64, w: &[f64], out: &mut [f64]) -> core::result::Result<(), StageError> {
        let p = exp(s);
        for (relay, &wi) in self.scenario.relays().iter().zip(w) {
            let (lo, hi) = relay.dist.support();
            if !(wi > lo) || wi > hi {
                return Err(StageError::Floor);
            }
        }
        match asymmetric_ode_rhs(p, w, self.scenario) {
            Ok(d) => {
                for (o, di) in out.iter_mut().zip(d) {
                    *o = p * di;
                }
                Ok(())
            }
            Err(Error::Singularity { .. }) => Err(StageError::Margin),
            Err(_) => Err(StageError::Floor),
        }
    }

    fn rk4(&self, s: f64, w: &[f64], h: f64) -> core::result::Result<Vec<f64>, StageError> {
        let n = w.len();
        let mut k1 = alloc::vec![0.0; n];
        let mut k2 = alloc::vec![0.0; n];
        let mut k3 = alloc::vec![0.0; n];
        let mut k4 = alloc::vec![0.0; n];
        let mut tmp = alloc::vec![0.0; n];
        self.rhs(s, w, &mut k1)?;
        for j in 0..n {
            tmp[j] = w[j] + 0.5 * h * k1[j];
        }
        self.rhs(s + 0.5 * h, &tmp, &mut k2)?;
        for j in 0..n {
            tmp[j] = w[j] + 0.5 * h * k2[j];
        }
        self.rhs(s + 0.5 * h, &tmp, &mut k3)?;
        for j in 0..n {
            tmp[j] = w[j] + h * k3[j];
        }
        self.rhs(s + h, &tmp, &mut k4)?;
        Ok((0..n)
            .map(|j| w[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
            .collect())
    }

    fn min_relative_margin(&self, p: f64, w: &[f64]) -> f64 {
        let rate = self.scenario.rate();
        self.scenario
            .relays()
            .iter()
            .zip(w)
            .map(|(r, &wi)| (p * rate - r.cost.cost(wi, rate)) / (p * rate))
            .fold(f64::INFINITY, f64::min)
    }

    fn shoot(&self, p_min: f64, steps: &mut usize) -> Result<Trajectory> {
        let mut w: Vec<f64> = self.scenario.relays().iter().map(|r| r.dist.support().1).collect();
        let mut s = log(p_min);
        let mut prices = alloc::vec![p_min];
        let mut types = alloc::vec![w.clone()];
        let mut h = self.config.step;
        if self.min_relative_margin(p_min, &w) <= 0.0 {
            return Ok(Trajectory {
                prices,
                types,
                shot: Shot::Low,
                floor_price: p_min,
            });
        }
        loop {
            *steps += 1;
            if *steps > self.config.max_steps {
                return Err(Error::NoConvergence {
                    method: "equilibrium shooting",
                    iterations: *steps,
                    detail: format!("step budget exhausted at p = {}", exp(s)),
                });
            }
            let p = exp(s);
            if self.min_relative_margin(p, &w) < 1e-6 {
                h = (0.5 * h).max(self.config.min_step);
            }
            match self.rk4(s, &w, h) {
                Ok(next) => {
                    let s_next = s + h;
                    let p_next = exp(s_next);
                    let hit = next.iter().zip(&self.floors).any(|(wi, fi)| *wi <= *fi);
                    if hit {
                        // linear interpolation of the first floor crossing
                        let frac = next
                            .iter()
                            .zip(&w)
                            .zip(&self.floors)
                            .filter(|((a, _), f)| **a <= **f)
                            .map(|((a, b), f)| (b - f) / (b - a))
                            .fold(1.0, f64::min)
                            .clamp(0.0, 1.0);
                        let sc = s + frac * h;
                        let wc: Vec<f64> = w.iter().zip(&next).map(|(a, b)| a + frac * (b - a)).collect();
                        prices.push(exp(sc));
                        types.push(wc);
                        return Ok(Trajectory {
                            prices,
                            types,
                            shot: Shot::High,
                            floor_price: exp(sc),
                        });
                    }
                    if self.min_relative_margin(p_next, &next) <= 1e-14 {
                        prices.push(p_next);
                        types.push(next);
                        return Ok(Trajectory {
                            prices,
                            types,
                            shot: Shot::Low,
                            floor_price: f64::NAN,
                        });
                    }
                    s = s_next;
                    w = next;
                    prices.push(p_next);
                    types.push(w.clone());
                    if p_next > self.safe_price {
                        // margins stay positive until a floor is reached
                        return Ok(Trajectory {
                            prices,
                            types,
                            shot: Shot::High,
                            floor_price: f64::NAN,
                        });
                    }
                    h = (2.0 * h).min(self.config.step);
                }
                Err(e) => {
                    if h > self.config.min_step {
                        h = (0.5 * h).max(self.config.min_step);
                        continue;
                    }
                    let shot = match e {
                        StageError::Floor => Shot::High,
                        StageError::Margin => Shot::Low,
                    };
                    return Ok(Trajectory {
                        prices,
                        types,
                        shot,
                        floor_price: p,
                    });
                }
            }
        }
    }
}

/// Asymmetric Bayesian equilibrium of the inelastic pricing game by shooting
/// on the common lowest price `p_min`: integrate the first-order system
/// upward from `w_i(p_min) = θ̄_i` in `ln p` and bisect on whether a type
/// floor or a vanishing margin is reached first.
pub fn solve_asymmetric_bne(scenario: &Scenario, config: &ShootingConfig) -> Result<BneSolution> {
    config.validate()?;
    if scenario.source().is_elastic() {
        return Err(Error::Unsupported(
            "asymmetric shooting supports inelastic sources only".into(),
        ));
    }
    let n = scenario.len();
    if n < 2 {
        return Err(Error::Unsupported(
            "asymmetric shooting needs two or more relays".into(),
        ));
    }
    let top = scenario.relay(0).dist.support().1;
    if scenario.relays().iter().any(|r| r.dist.support().1 != top) {
        return Err(Error::Unsupported(
            "relays must share the upper end of their type support".into(),
        ));
    }
    if n > 2 {
        let support = scenario.relay(0).dist.support();
        if scenario.relays().iter().any(|r| r.dist.support() != support) {
            return Err(Error::Unsupported(
                "more than two relays need identical supports".into(),
            ));
        }
    }
    let rate = scenario.rate();
    let shooter = Shooter::new(scenario, config);
    let mut steps = 0usize;

    let (mut lo, mut hi) = match config.p_min_bracket {
        Some(b) => b,
        None => {
            let lo = scenario
                .relays()
                .iter()
                .map(|r| r.cost.cost(r.dist.support().1, rate) / rate)
                .fold(0.0, f64::max);
            let hi = scenario
                .relays()
                .iter()
                .map(|r| r.cost.cost(r.dist.support().0, rate) / rate)
                .fold(f64::INFINITY, f64::min);
            (lo, hi)
        }
    };
    let mut high = None;
    if hi.is_finite() {
        let t = shooter.shoot(hi, &mut steps)?;
        if t.shot == Shot::High {
            high = Some(t);
        }
    } else {
        hi = 2.0 * lo;
    }
    let mut doublings = 0;
    while high.is_none() {
        doublings += 1;
        if doublings > 200 {
            return Err(Error::NoConvergence {
                method: "equilibrium shooting",
                iterations: doublings,
                detail: format!("no upper bracket for p_min found up to {hi}"),
            });
        }
        if config.p_min_bracket.is_some() && doublings == 1 {
            return Err(Error::NoConvergence {
                method: "equilibrium shooting",
                iterations: 0,
                detail: format!("supplied bracket upper end {hi} does not overshoot"),
            });
        }
        let t = shooter.shoot(hi, &mut steps)?;
        if t.shot == Shot::High {
            high = Some(t);
        } else {
            lo = hi;
            hi *= 2.0;
        }
    }
    let mut high = high.expect("bracket found");
    if shooter.shoot(lo, &mut steps)?.shot != Shot::Low {
        return Err(Error::NoConvergence {
            method: "equilibrium shooting",
            iterations: 0,
            detail: format!("bracket lower end {lo} does not undershoot"),
        });
    }
    let mut iterations = 0;
    while hi - lo > config.boundary_tol * 1e-6 * hi && hi - lo > 4.0 * f64::EPSILON * hi {
        if iterations >= config.max_iterations {
            return Err(Error::NoConvergence {
                method: "equilibrium shooting",
                iterations,
                detail: format!("p_min bracket [{lo}, {hi}] still open"),
            });
        }
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let t = shooter.shoot(mid, &mut steps)?;
        match t.shot {
            Shot::High => {
                hi = mid;
                high = t;
            }
            Shot::Low => lo = mid,
        }
    }

    let mut strategies = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for (i, relay) in scenario.relays().iter().enumerate() {
        let (t_lo, _) = relay.dist.support();
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(high.prices.len() + 1);
        for (p, w) in high.prices.iter().zip(&high.types) {
            let wi = w[i];
            if wi <= t_lo {
                break;
            }
            if pts.last().is_none_or(|&(wl, pl)| wi < wl && *p > pl) {
                pts.push((wi, *p));
            }
        }
        let terminal = relay.cost.cost(t_lo, rate) / rate;
        let (last_w, last_p) = *pts.last().expect("trajectory starts at the top type");
        if terminal.is_finite() {
            while pts.len() > 1 && pts.last().expect("non-empty").1 >= terminal {
                pts.pop();
            }
            residuals.push(fabs(last_p * rate - relay.cost.cost(last_w, rate)) / (last_p * rate));
            pts.push((t_lo, terminal));
        } else {
            residuals.push((last_p * rate - relay.cost.cost(last_w, rate)) / (last_p * rate));
        }
        pts.reverse();
        let (thetas, prices): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        strategies.push(
            PricingStrategy::tabulated(thetas, prices).map_err(|e| Error::NoConvergence {
                method: "equilibrium shooting",
                iterations,
                detail: format!("relay {i}: trajectory is not a valid strategy ({e})"),
            })?,
        );
    }
    let starts: Vec<f64> = strategies
        .iter()
        .map(|s| *s.table().prices().last().expect("non-empty"))
        .collect();
    let start_gap = starts
        .iter()
        .flat_map(|a| starts.iter().map(move |b| fabs(a - b)))
        .fold(0.0, f64::max);
    Ok(BneSolution {
        strategies,
        p_min: hi,
        diagnostics: BneDiagnostics {
            iterations,
            bracket: (lo, hi),
            start_gap,
            boundary_residuals: residuals,
            floor_price: high.floor_price,
            steps,
        },
    })
}

/// All traffic to the cheapest relay (lowest index on ties); an elastic
/// source first withholds its best-response rate at the winning price.
pub fn winner_allocation(prices: &[f64], scenario: &Scenario) -> Allocation {
    let winner = prices
        .iter()
        .enumerate()
        .fold(0, |best, (i, &p)| if p < prices[best] { i } else { best });
    let rate = scenario.rate();
    let (withheld, _) = scenario.source().withheld_response(prices[winner]);
    let mut rates = alloc::vec![0.0; scenario.len()];
    rates[winner] = rate - withheld;
    Allocation { withheld, rates }
}

/// `Π_{j≠i} F_j(w_j(p_i)) · (p_i·r_s - C_i(θ_i, r_s))`.
pub fn expected_profit(scenario: &Scenario, i: usize, theta_i: f64, price: f64, strategies: &[PricingStrategy]) -> f64 {
    let rate = scenario.rate();
    let mut win = 1.0;
    for (j, (relay, strategy)) in scenario.relays().iter().zip(strategies).enumerate() {
        if j != i {
            win *= relay.dist.cdf(strategy.inverse(price, &relay.dist));
        }
    }
    let margin = price * rate - scenario.relay(i).cost.cost(theta_i, rate);
    if win == 0.0 {
        0.0
    } else {
        win * margin
    }
}

/// Human-readable summary line of a solve, for logs.
pub fn describe(solution: &BneSolution) -> String {
    format!(
        "p_min = {:.12} after {} bisections ({} steps), start gap {:e}",
        solution.p_min, solution.diagnostics.iterations, solution.diagnostics.steps, solution.diagnostics.start_gap
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostFamily, Relay, SourceModel};
    use alloc::vec;

    fn power_uniform() -> (CostModel, TypeDistribution) {
        (
            CostModel::new(CostFamily::PowerExp),
            TypeDistribution::uniform(1.0, 2.0).unwrap(),
        )
    }

    #[test]
    fn monopoly_price_is_lowest_type_cost() {
        let (c, d) = power_uniform();
        for t in [1.0, 1.3, 2.0] {
            assert!(fabs(symmetric_bne_price(&c, &d, 1, 1.0, t).unwrap() - 1.0) < 1e-15);
        }
    }

    #[test]
    fn value_function_matches_price_rearrangement() {
        let (c, d) = power_uniform();
        for n in [2, 3] {
            for t in [1.1, 1.5, 1.9] {
                let p = symmetric_bne_price(&c, &d, n, 1.0, t).unwrap();
                let v = symmetric_value_function(&c, &d, n, 1.0, t).unwrap();
                let w = pow(d.cdf(t), (n - 1) as f64) * (p - c.cost(t, 1.0));
                assert!(fabs(v - w) < 1e-8);
            }
        }
    }

    #[test]
    fn symmetric_price_errors_when_lowest_cost_is_unbounded() {
        let c = CostModel::new(CostFamily::ExpOverTheta);
        let d = TypeDistribution::uniform(0.0, 1.0).unwrap();
        assert!(symmetric_bne_price(&c, &d, 2, 1.0, 0.5).unwrap_err().is_numeric());
    }

    #[test]
    fn two_relay_rhs_depends_on_rival_margin_only() {
        let (c, d) = power_uniform();
        let sc = Scenario::symmetric(c, d, 2, 1.0).unwrap();
        let (p, w) = (1.0, [1.6, 1.8]);
        let rhs = asymmetric_ode_rhs(p, &w, &sc).unwrap();
        let m2 = p - c.cost(1.8, 1.0);
        assert!(fabs(rhs[0] + d.cdf_over_pdf(1.6) / m2) < 1e-14);
        assert!(asymmetric_ode_rhs(0.1, &w, &sc).unwrap_err().is_numeric());
    }

    #[test]
    fn elastic_rhs_reduces_without_withholding() {
        let (c, d) = power_uniform();
        let relays = vec![Relay::new(c, d); 3];
        let el = Scenario::new(
            SourceModel::Elastic {
                rate: 1.0,
                theta_s: 1e6,
            },
            relays.clone(),
        )
        .unwrap();
        let inel = Scenario::new(SourceModel::Inelastic { rate: 1.0 }, relays).unwrap();
        let w = [1.2, 1.5, 1.7];
        let a = elastic_ode_rhs(1.0, &w, &el, ElasticReading::AsPrinted).unwrap();
        let b = asymmetric_ode_rhs(1.0, &w, &inel).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(fabs(x - y) < 1e-14);
        }
    }

    #[test]
    fn winner_takes_all_and_ties_go_to_lowest_index() {
        let (c, d) = power_uniform();
        let sc = Scenario::symmetric(c, d, 3, 2.0).unwrap();
        assert_eq!(winner_allocation(&[3.0, 2.0, 5.0], &sc).rates, vec![0.0, 2.0, 0.0]);
        assert_eq!(winner_allocation(&[2.0, 2.0, 5.0], &sc).rates, vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn monopolist_profit_has_no_probability_factor() {
        let (c, d) = power_uniform();
        let sc = Scenario::symmetric(c, d, 1, 1.0).unwrap();
        let s = PricingStrategy::tabulated(vec![1.0, 2.0], vec![1.0, 0.9]).unwrap();
        assert!(fabs(expected_profit(&sc, 0, 1.5, 2.0, &[s]) - (2.0 - 1.0 / 1.5)) < 1e-15);
    }
}
