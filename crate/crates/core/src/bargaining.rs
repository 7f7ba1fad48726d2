//! Full-bargaining contracts: the complete-information contract, the
//! virtual-cost mechanism, interim transfers and a truth-telling audit.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{sample_types, Allocation, CostModel, Outcome, Scenario, TypeDistribution};
use crate::numeric::{fabs, gauss_legendre, sqrt};
use crate::social::{equalize, residual_of, solve_social_optimum, split, Curve};

/// Relative offset from the lower support end used where the density vanishes.
pub const EDGE_OFFSET: f64 = 1e-9;

/// Contract paying every relay exactly its cost at the optimal split.
pub fn complete_info_contract(scenario: &Scenario, theta: &[f64]) -> Result<Outcome> {
    let (allocation, _) = solve_social_optimum(scenario, theta)?;
    let transfers = scenario
        .relays()
        .iter()
        .zip(theta)
        .zip(&allocation.rates)
        .map(|((relay, &t), &r)| relay.cost.cost(t, r))
        .collect();
    Outcome::new(allocation, transfers)
}

/// Cost adjusted by the information rent, `J = C - ((1 - F)/f)·∂C/∂θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualCostView {
    pub cost: CostModel,
    pub dist: TypeDistribution,
}

impl VirtualCostView {
    pub fn new(cost: CostModel, dist: TypeDistribution) -> Self {
        VirtualCostView { cost, dist }
    }

    /// Type at which `J` is evaluated: `θ` itself, or `θ̲ + ε` where the
    /// density vanishes or the type is not positive.
    pub fn effective_type(&self, theta: f64) -> f64 {
        let (lo, _) = self.dist.support();
        if theta <= lo && (self.dist.pdf(lo) == 0.0 || lo <= 0.0) {
            lo + EDGE_OFFSET * self.dist.width()
        } else {
            theta
        }
    }

    pub fn hazard(&self, theta: f64) -> f64 {
        self.dist.inverse_hazard(self.effective_type(theta))
    }

    fn check(&self, theta: f64, r: f64) -> Result<f64> {
        let (lo, hi) = self.dist.support();
        if !(theta >= lo && theta <= hi) {
            return Err(Error::domain("theta", theta, "type outside support"));
        }
        let t = self.effective_type(theta);
        if !(t > 0.0) {
            return Err(Error::domain("theta", theta, "type must be positive"));
        }
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::domain("r", r, "rate must be finite and non-negative"));
        }
        if self.cost.family() == crate::model::CostFamily::Mm1Delay && r >= t {
            return Err(Error::domain("r", r, "M/M/1 flow must stay below capacity"));
        }
        Ok(t)
    }

    /// `J(θ, r)`.
    pub fn value(&self, theta: f64, r: f64) -> Result<f64> {
        let t = self.check(theta, r)?;
        Ok(self.cost.virtual_profile(t, r, self.dist.inverse_hazard(t)).0)
    }

    /// `∂J/∂r`.
    pub fn marginal(&self, theta: f64, r: f64) -> Result<f64> {
        let t = self.check(theta, r)?;
        Ok(self.cost.virtual_profile(t, r, self.dist.inverse_hazard(t)).1)
    }

    /// Whether `J(θ, ·)` has second differences `≥ -1e-9` (relative) on
    /// `points` rates spanning `[0, cap]`.
    pub fn is_convex_in_rate(&self, theta: f64, cap: f64, points: usize) -> bool {
        let t = self.effective_type(theta);
        let h = self.dist.inverse_hazard(t);
        let step = cap / (points - 1) as f64;
        let vals: Vec<f64> = (0..points)
            .map(|k| self.cost.virtual_profile(t, step * k as f64, h).0)
            .collect();
        vals.windows(3).all(|w| {
            let d2 = w[2] - 2.0 * w[1] + w[0];
            d2 >= -1e-9 * (1.0 + fabs(w[1]))
        })
    }

    fn curve(&self, theta: f64, cap: f64) -> Curve {
        let t = self.effective_type(theta);
        Curve::Virtual {
            cost: self.cost,
            theta: t,
            hazard: self.dist.inverse_hazard(t),
            cap,
        }
    }
}

/// `J(θ, r)` for a view.
pub fn virtual_cost(view: &VirtualCostView, theta: f64, r: f64) -> Result<f64> {
    view.value(theta, r)
}

/// Controls for [`solve_virtual_allocation_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualOptions {
    /// Skip the marginal solver and search the rate grid.
    pub force_grid: bool,
    /// Grid cells per unit of source rate in the fallback search.
    pub grid_cells: usize,
    /// Rate points in the convexity probe.
    pub convexity_points: usize,
}

impl Default for VirtualOptions {
    fn default() -> Self {
        VirtualOptions {
            force_grid: false,
            grid_cells: 400,
            convexity_points: 200,
        }
    }
}

/// Minimizer of `C_s + Σ J_i`. With the grid fallback, `candidates` holds
/// every grid allocation tied with the best one.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSolution {
    pub allocation: Allocation,
    pub candidates: Vec<Allocation>,
    pub convex: bool,
    /// Spread of the active virtual marginals (zero-floor test included).
    pub residual: f64,
}

fn virtual_curves(scenario: &Scenario, theta: &[f64]) -> Vec<Curve> {
    let cap = scenario.rate();
    let mut curves = Vec::with_capacity(scenario.len() + 1);
    if scenario.source().is_elastic() {
        curves.push(Curve::Overflow(*scenario.source()));
    }
    for (relay, &t) in scenario.relays().iter().zip(theta) {
        curves.push(VirtualCostView::new(relay.cost, relay.dist).curve(t, cap));
    }
    curves
}

fn check_virtual_types(scenario: &Scenario, theta: &[f64]) -> Result<()> {
    if theta.len() != scenario.len() {
        return Err(Error::InvalidScenario(format!(
            "expected {} types, got {}",
            scenario.len(),
            theta.len()
        )));
    }
    for (relay, &t) in scenario.relays().iter().zip(theta) {
        let view = VirtualCostView::new(relay.cost, relay.dist);
        view.check(t, 0.0)?;
    }
    Ok(())
}

fn virtual_residual(curves: &[Curve], rates: &[f64]) -> f64 {
    let links: Vec<(f64, f64)> = curves
        .iter()
        .zip(rates)
        .map(|(c, &r)| (c.marginal(r), c.marginal(0.0)))
        .collect();
    residual_of(&links, rates)
}

/// Allocation minimizing total virtual cost.
pub fn solve_virtual_allocation(scenario: &Scenario, theta: &[f64]) -> Result<VirtualSolution> {
    solve_virtual_allocation_with(scenario, theta, &VirtualOptions::default())
}

pub fn solve_virtual_allocation_with(
    scenario: &Scenario,
    theta: &[f64],
    options: &VirtualOptions,
) -> Result<VirtualSolution> {
    check_virtual_types(scenario, theta)?;
    let cap = scenario.rate();
    let convex = scenario.relays().iter().zip(theta).all(|(relay, &t)| {
        VirtualCostView::new(relay.cost, relay.dist).is_convex_in_rate(t, cap, options.convexity_points.max(3))
    });
    if convex && !options.force_grid {
        return solve_convex(scenario, theta);
    }
    grid_search(scenario, theta, convex, options)
}

fn solve_convex(scenario: &Scenario, theta: &[f64]) -> Result<VirtualSolution> {
    let curves = virtual_curves(scenario, theta);
    let (rates, _) = equalize(&curves, scenario.rate(), None, 400)?;
    let residual = virtual_residual(&curves, &rates);
    let allocation = split(scenario, rates);
    Ok(VirtualSolution {
        candidates: alloc::vec![allocation.clone()],
        allocation,
        convex: true,
        residual,
    })
}

fn grid_search(scenario: &Scenario, theta: &[f64], convex: bool, options: &VirtualOptions) -> Result<VirtualSolution> {
    let curves_theta: Vec<(VirtualCostView, f64)> = scenario
        .relays()
        .iter()
        .zip(theta)
        .map(|(r, &t)| (VirtualCostView::new(r.cost, r.dist), t))
        .collect();
    let source = *scenario.source();
    let elastic = source.is_elastic();
    let mut costs: Vec<&dyn Fn(f64) -> f64> = Vec::new();
    let overflow = move |r: f64| source.overflow_cost(r);
    let relay_costs: Vec<_> = curves_theta
        .iter()
        .map(|(view, t)| {
            let t = view.effective_type(*t);
            let h = view.dist.inverse_hazard(t);
            let cost = view.cost;
            move |r: f64| cost.virtual_profile(t, r, h).0
        })
        .collect();
    if elastic {
        costs.push(&overflow);
    }
    for c in &relay_costs {
        costs.push(c);
    }
    let cells = libm::ceil((options.grid_cells as f64) * scenario.rate()).max(1.0) as usize;
    let found = crate::verify::simplex_minimize(&costs, scenario.rate(), cells)?;
    let best = found.value;
    let tol = 1e-9 * (1.0 + fabs(best));
    let candidates: Vec<Allocation> = found
        .near_best
        .iter()
        .filter(|(v, _)| *v <= best + tol)
        .map(|(_, r)| split(scenario, r.clone()))
        .collect();
    let curves = virtual_curves(scenario, theta);
    let residual = virtual_residual(&curves, &found.rates);
    Ok(VirtualSolution {
        allocation: split(scenario, found.rates),
        candidates,
        convex,
        residual,
    })
}

/// Precomputed virtual-cost mechanism for repeated solves at many type
/// vectors; convexity is probed once over a type-by-rate grid.
#[derive(Debug, Clone)]
pub struct VirtualMechanism {
    scenario: Scenario,
    convex: bool,
}

impl VirtualMechanism {
    pub fn new(scenario: &Scenario) -> Self {
        let cap = scenario.rate();
        let convex = scenario.relays().iter().all(|relay| {
            let view = VirtualCostView::new(relay.cost, relay.dist);
            let (lo, hi) = relay.dist.support();
            (0..=50).all(|k| {
                let t = lo + (hi - lo) * k as f64 / 50.0;
                view.is_convex_in_rate(t, cap, 200)
            })
        });
        VirtualMechanism {
            scenario: scenario.clone(),
            convex,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn allocate(&self, theta: &[f64]) -> Result<Allocation> {
        if self.convex {
            check_virtual_types(&self.scenario, theta)?;
            let curves = virtual_curves(&self.scenario, theta);
            let (rates, _) = equalize(&curves, self.scenario.rate(), None, 400)?;
            Ok(split(&self.scenario, rates))
        } else {
            Ok(solve_virtual_allocation(&self.scenario, theta)?.allocation)
        }
    }
}

/// Interim quantities of one relay at one type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterimTransfer {
    /// `E[t_i]`.
    pub transfer: f64,
    /// `E[C_i(θ_i, r_i)]`.
    pub expected_cost: f64,
    /// Information rent `V_i(θ_i)`.
    pub rent: f64,
}

/// Lower limit of the rent integral: `θ̲`, or `θ̲ + ε` when the cost is
/// unbounded there.
fn rent_anchor(scenario: &Scenario, i: usize) -> (f64, bool) {
    let relay = scenario.relay(i);
    let (lo, _) = relay.dist.support();
    let probe = relay.cost.d_theta(lo, scenario.rate());
    if lo > 0.0 && probe.is_finite() {
        (lo, false)
    } else {
        (lo + EDGE_OFFSET * relay.dist.width(), true)
    }
}

/// Panels over `[anchor, max(points)]` with the points as breakpoints; panel
/// widths grow geometrically away from a singular anchor.
fn panels(anchor: f64, singular: bool, width: f64, points: &[f64]) -> Vec<f64> {
    let top = points.iter().copied().fold(anchor, f64::max);
    let mut cuts = alloc::vec![anchor];
    if singular {
        let mut d = EDGE_OFFSET * width;
        while anchor + 2.0 * d < top && 2.0 * d < width / 40.0 {
            d *= 2.0;
            cuts.push(anchor + d);
        }
    }
    let max_panel = width / 40.0;
    let mut pts: Vec<f64> = points.iter().copied().filter(|&p| p > anchor).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    for p in pts {
        let last = *cuts.last().expect("non-empty");
        if p <= last {
            continue;
        }
        let k = libm::ceil((p - last) / max_panel).max(1.0) as usize;
        for j in 1..k {
            cuts.push(last + (p - last) * j as f64 / k as f64);
        }
        cuts.push(p);
    }
    cuts
}

/// Per-sample cumulative rent integrals `∫_{anchor}^{u} -∂C_i/∂x(x, r_i(x, y))`
/// at the sorted, deduplicated points.
struct RentGrid {
    points: Vec<f64>,
    /// `[sample][point]`
    cumulative: Vec<Vec<f64>>,
}

fn rent_grid<A>(scenario: &Scenario, i: usize, points: &[f64], rule: &A, samples: usize, seed: u64) -> Result<RentGrid>
where
    A: Fn(&[f64]) -> Result<Allocation>,
{
    let relay = scenario.relay(i);
    let (anchor, singular) = rent_anchor(scenario, i);
    let cuts = panels(anchor, singular, relay.dist.width(), points);
    let (gx, gw) = gauss_legendre(8);
    let draws = sample_types(scenario, samples, seed);
    let mut sorted: Vec<f64> = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut cumulative = Vec::with_capacity(samples);
    let mut theta = alloc::vec![0.0; scenario.len()];
    for draw in &draws {
        theta.copy_from_slice(draw);
        let mut acc = 0.0;
        let mut at_cut = Vec::with_capacity(cuts.len());
        at_cut.push(0.0);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let mut panel = 0.0;
            for (x, wt) in gx.iter().zip(&gw) {
                let xx = mid + half * x;
                theta[i] = xx;
                let r = rule(&theta)?.rates[i];
                panel += wt * -relay.cost.d_theta(xx, r);
            }
            acc += half * panel;
            at_cut.push(acc);
        }
        let row: Vec<f64> = sorted
            .iter()
            .map(|&p| {
                if p <= anchor {
                    0.0
                } else {
                    let k = cuts.partition_point(|&c| c < p);
                    at_cut[k.min(at_cut.len() - 1)]
                }
            })
            .collect();
        cumulative.push(row);
    }
    Ok(RentGrid {
        points: sorted,
        cumulative,
    })
}

/// Expected transfer to relay `i` at type `θ_i`: expected cost plus the
/// information rent from the envelope formula, with the other relays' types
/// drawn by Monte Carlo (common draws for every quadrature node).
pub fn interim_transfer<A>(
    scenario: &Scenario,
    i: usize,
    theta_i: f64,
    rule: A,
    samples: usize,
    seed: u64,
) -> Result<InterimTransfer>
where
    A: Fn(&[f64]) -> Result<Allocation>,
{
    let table = interim_transfers(scenario, i, &[theta_i], rule, samples, seed)?;
    Ok(table[0])
}

/// [`interim_transfer`] at several types with shared draws.
pub fn interim_transfers<A>(
    scenario: &Scenario,
    i: usize,
    thetas: &[f64],
    rule: A,
    samples: usize,
    seed: u64,
) -> Result<Vec<InterimTransfer>>
where
    A: Fn(&[f64]) -> Result<Allocation>,
{
    if samples < 100 {
        return Err(Error::Config(format!(
            "at least 100 Monte Carlo samples are required, got {samples}"
        )));
    }
    if i >= scenario.len() {
        return Err(Error::InvalidScenario(format!("relay index {i} out of range")));
    }
    let relay = scenario.relay(i);
    let (lo, hi) = relay.dist.support();
    for &t in thetas {
        if !(t >= lo && t <= hi) {
            return Err(Error::domain("theta", t, "type outside support"));
        }
    }
    let grid = rent_grid(scenario, i, thetas, &rule, samples, seed)?;
    let draws = sample_types(scenario, samples, seed);
    let mut theta = alloc::vec![0.0; scenario.len()];
    let rate = scenario.rate();
    thetas
        .iter()
        .map(|&t| {
            let k = grid.points.partition_point(|&p| p < t);
            let rent = grid.cumulative.iter().map(|row| row[k]).sum::<f64>() / samples as f64;
            let rent = if t <= lo { 0.0 } else { rent };
            let mut cost = 0.0;
            for draw in &draws {
                theta.copy_from_slice(draw);
                theta[i] = t;
                let r = rule(&theta)?.rates[i];
                cost += relay.cost.cost(t, r.min(rate));
            }
            let expected_cost = cost / samples as f64;
            Ok(InterimTransfer {
                transfer: expected_cost + rent,
                expected_cost,
                rent,
            })
        })
        .collect()
}

/// Largest interim gain from misreporting found by the audit; truthful pairs
/// are skipped, so `max_gain` is `-∞` when there is no misreport to test.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthAudit {
    pub max_gain: f64,
    /// Standard error of the estimate at the maximizing pair.
    pub std_error: f64,
    /// `(relay, true type, report)` of the maximizing pair.
    pub worst: (usize, f64, f64),
    /// Every pair had gain at most three standard errors.
    pub pass: bool,
}

/// For every relay, true type and report, estimates
/// `E[t_i(θ̃)] - E[C_i(θ, r_i(θ̃, ·))] - (E[t_i(θ)] - E[C_i(θ, r_i(θ, ·))])`
/// from common draws of the other types.
pub fn truth_telling_audit(
    scenario: &Scenario,
    types: &[f64],
    reports: &[f64],
    samples: usize,
    seed: u64,
) -> Result<TruthAudit> {
    let mechanism = VirtualMechanism::new(scenario);
    truth_telling_audit_with(
        scenario,
        types,
        reports,
        |t: &[f64]| mechanism.allocate(t),
        samples,
        seed,
    )
}

pub fn truth_telling_audit_with<A>(
    scenario: &Scenario,
    types: &[f64],
    reports: &[f64],
    rule: A,
    samples: usize,
    seed: u64,
) -> Result<TruthAudit>
where
    A: Fn(&[f64]) -> Result<Allocation>,
{
    if samples < 100 {
        return Err(Error::Config(format!(
            "at least 100 Monte Carlo samples are required, got {samples}"
        )));
    }
    let draws = sample_types(scenario, samples, seed);
    let mut union: Vec<f64> = types.iter().chain(reports).copied().collect();
    union.sort_by(f64::total_cmp);
    union.dedup();
    let mut audit = TruthAudit {
        max_gain: f64::NEG_INFINITY,
        std_error: 0.0,
        worst: (0, f64::NAN, f64::NAN),
        pass: true,
    };
    let rate = scenario.rate();
    let mut theta = alloc::vec![0.0; scenario.len()];
    for i in 0..scenario.len() {
        let relay = scenario.relay(i);
        let (lo, hi) = relay.dist.support();
        if let Some(&t) = union.iter().find(|&&t| !(t >= lo && t <= hi)) {
            return Err(Error::domain("theta", t, "audit type outside support"));
        }
        let grid = rent_grid(scenario, i, &union, &rule, samples, seed)?;
        // rates at each report for each draw: [sample][report]
        let mut report_rates = Vec::with_capacity(samples);
        for draw in &draws {
            theta.copy_from_slice(draw);
            let row = reports
                .iter()
                .map(|&q| {
                    theta[i] = q;
                    rule(&theta).map(|a| a.rates[i].min(rate))
                })
                .collect::<Result<Vec<f64>>>()?;
            report_rates.push(row);
        }
        let index = |x: f64| grid.points.partition_point(|&p| p < x);
        for &t in types {
            let kt = index(t);
            for (q_idx, &q) in reports.iter().enumerate() {
                if q == t {
                    continue;
                }
                let kq = index(q);
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for (rates, rent) in report_rates.iter().zip(&grid.cumulative) {
                    let r = rates[q_idx];
                    let g = relay.cost.cost(q, r) - relay.cost.cost(t, r) + rent[kq] - rent[kt];
                    sum += g;
                    sum_sq += g * g;
                }
                let n = samples as f64;
                let mean = sum / n;
                let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
                let se = sqrt(var / n);
                if mean > 3.0 * se + 1e-12 * (1.0 + sqrt(sum_sq / n)) {
                    audit.pass = false;
                }
                if mean > audit.max_gain {
                    audit.max_gain = mean;
                    audit.std_error = se;
                    audit.worst = (i, t, q);
                }
            }
        }
    }
    Ok(audit)
}
