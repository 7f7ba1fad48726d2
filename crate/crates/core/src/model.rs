//! Link costs, type distributions, sources, scenarios and outcomes.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::{exp, fabs, log, open_unit, pow};

const LN_2: f64 = core::f64::consts::LN_2;

/// Parametric forms of the forwarding cost `C(θ, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostFamily {
    /// `(2^r - 1) / θ`: transmit power over a Shannon-capacity path.
    PowerExp,
    /// `(e^r - 1) / θ`.
    ExpOverTheta,
    /// `r² / (2θ)`, the linear-marginal family.
    QuadraticOverTheta,
    /// M/M/1 delay `r / (k - r)` with the capacity `k` as type.
    Mm1Delay,
}

/// A cost family together with a positive multiplicative scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    family: CostFamily,
    scale: f64,
}

impl CostModel {
    pub fn new(family: CostFamily) -> Self {
        CostModel { family, scale: 1.0 }
    }

    pub fn with_scale(family: CostFamily, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::domain("scale", scale, "cost scale must be positive"));
        }
        Ok(CostModel { family, scale })
    }

    pub fn family(&self) -> CostFamily {
        self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `(g(r), g'(r), g''(r))` for the families of the form `g(r) / θ`.
    #[inline]
    fn rate_profile(&self, r: f64) -> (f64, f64, f64) {
        match self.family {
            CostFamily::PowerExp => {
                let t = pow(2.0, r);
                (t - 1.0, LN_2 * t, LN_2 * LN_2 * t)
            }
            CostFamily::ExpOverTheta => {
                let t = exp(r);
                (libm::expm1(r), t, t)
            }
            CostFamily::QuadraticOverTheta => (0.5 * r * r, r, 1.0),
            CostFamily::Mm1Delay => unreachable!("M/M/1 cost is not separable"),
        }
    }

    /// `C(θ, r)`; no domain checks.
    #[inline]
    pub fn cost(&self, theta: f64, r: f64) -> f64 {
        let v = match self.family {
            CostFamily::Mm1Delay => r / (theta - r),
            _ => self.rate_profile(r).0 / theta,
        };
        self.scale * v
    }

    /// `∂C/∂r`.
    #[inline]
    pub fn marginal(&self, theta: f64, r: f64) -> f64 {
        let v = match self.family {
            CostFamily::Mm1Delay => {
                let d = theta - r;
                theta / (d * d)
            }
            _ => self.rate_profile(r).1 / theta,
        };
        self.scale * v
    }

    /// `∂²C/∂r²`.
    #[inline]
    pub fn marginal_slope(&self, theta: f64, r: f64) -> f64 {
        let v = match self.family {
            CostFamily::Mm1Delay => {
                let d = theta - r;
                2.0 * theta / (d * d * d)
            }
            _ => self.rate_profile(r).2 / theta,
        };
        self.scale * v
    }

    /// `∂C/∂θ`.
    #[inline]
    pub fn d_theta(&self, theta: f64, r: f64) -> f64 {
        let v = match self.family {
            CostFamily::Mm1Delay => {
                let d = theta - r;
                -r / (d * d)
            }
            _ => -self.rate_profile(r).0 / (theta * theta),
        };
        self.scale * v
    }

    /// `∂²C/∂θ∂r`.
    #[inline]
    pub fn cross(&self, theta: f64, r: f64) -> f64 {
        let v = match self.family {
            CostFamily::Mm1Delay => {
                let d = theta - r;
                -(theta + r) / (d * d * d)
            }
            _ => -self.rate_profile(r).1 / (theta * theta),
        };
        self.scale * v
    }

    /// `∂³C/∂θ∂r²`.
    #[inline]
    pub fn cross_slope(&self, theta: f64, r: f64) -> f64 {
        let v = match self.family {
            CostFamily::Mm1Delay => {
                let d = theta - r;
                -(4.0 * theta + 2.0 * r) / (d * d * d * d)
            }
            _ => -self.rate_profile(r).2 / (theta * theta),
        };
        self.scale * v
    }

    /// `C - h·∂C/∂θ` and its first two `r`-derivatives for an inverse hazard
    /// `h = (1 - F)/f`. Separable families are assembled in factored form.
    #[inline]
    pub(crate) fn virtual_profile(&self, theta: f64, r: f64, h: f64) -> (f64, f64, f64) {
        match self.family {
            CostFamily::Mm1Delay => (
                self.cost(theta, r) - h * self.d_theta(theta, r),
                self.marginal(theta, r) - h * self.cross(theta, r),
                self.marginal_slope(theta, r) - h * self.cross_slope(theta, r),
            ),
            _ => {
                let (g, g1, g2) = self.rate_profile(r);
                let k = self.scale * (theta + h) / (theta * theta);
                (k * g, k * g1, k * g2)
            }
        }
    }

    fn check_domain(&self, theta: f64, r: f64) -> Result<()> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::domain("theta", theta, "type must be finite and positive"));
        }
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::domain("r", r, "rate must be finite and non-negative"));
        }
        if self.family == CostFamily::Mm1Delay && r >= theta {
            return Err(Error::domain("r", r, "M/M/1 flow must stay below capacity"));
        }
        Ok(())
    }
}

/// `C(θ, r)` with domain checks.
pub fn cost_eval(model: &CostModel, theta: f64, r: f64) -> Result<f64> {
    model.check_domain(theta, r)?;
    Ok(model.cost(theta, r))
}

/// `∂C/∂r (θ, r)` with domain checks.
pub fn marginal_eval(model: &CostModel, theta: f64, r: f64) -> Result<f64> {
    model.check_domain(theta, r)?;
    Ok(model.marginal(theta, r))
}

/// Prior law of a relay's type on a compact support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TypeDistribution {
    Uniform {
        a: f64,
        b: f64,
    },
    /// `F(θ) = ((θ - a)/(b - a))^γ`.
    PowerCdf {
        a: f64,
        b: f64,
        gamma: f64,
    },
}

impl TypeDistribution {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        check_support(a, b)?;
        Ok(TypeDistribution::Uniform { a, b })
    }

    pub fn power_cdf(a: f64, b: f64, gamma: f64) -> Result<Self> {
        check_support(a, b)?;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::domain("gamma", gamma, "exponent must be positive"));
        }
        Ok(TypeDistribution::PowerCdf { a, b, gamma })
    }

    /// `(θ̲, θ̄)`.
    #[inline]
    pub fn support(&self) -> (f64, f64) {
        match *self {
            TypeDistribution::Uniform { a, b } | TypeDistribution::PowerCdf { a, b, .. } => (a, b),
        }
    }

    #[inline]
    pub fn width(&self) -> f64 {
        let (a, b) = self.support();
        b - a
    }

    #[inline]
    fn unit(&self, theta: f64) -> f64 {
        let (a, b) = self.support();
        ((theta - a) / (b - a)).clamp(0.0, 1.0)
    }

    #[inline]
    pub fn cdf(&self, theta: f64) -> f64 {
        match *self {
            TypeDistribution::Uniform { .. } => self.unit(theta),
            TypeDistribution::PowerCdf { gamma, .. } => pow(self.unit(theta), gamma),
        }
    }

    #[inline]
    pub fn pdf(&self, theta: f64) -> f64 {
        let (a, b) = self.support();
        if theta < a || theta > b {
            return 0.0;
        }
        match *self {
            TypeDistribution::Uniform { .. } => 1.0 / (b - a),
            TypeDistribution::PowerCdf { gamma, .. } => gamma * pow(self.unit(theta), gamma - 1.0) / (b - a),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let (a, b) = self.support();
        let u = u.clamp(0.0, 1.0);
        match *self {
            TypeDistribution::Uniform { .. } => a + (b - a) * u,
            TypeDistribution::PowerCdf { gamma, .. } => a + (b - a) * pow(u, 1.0 / gamma),
        }
    }

    /// `F(θ)/f(θ)`, evaluated without the 0/0 at the lower end.
    #[inline]
    pub fn cdf_over_pdf(&self, theta: f64) -> f64 {
        let (a, b) = self.support();
        let x = theta.clamp(a, b) - a;
        match *self {
            TypeDistribution::Uniform { .. } => x,
            TypeDistribution::PowerCdf { gamma, .. } => x / gamma,
        }
    }

    /// Inverse hazard `(1 - F(θ))/f(θ)`; infinite where the density vanishes.
    #[inline]
    pub fn inverse_hazard(&self, theta: f64) -> f64 {
        let (a, b) = self.support();
        match *self {
            TypeDistribution::Uniform { .. } => (b - theta.clamp(a, b)).max(0.0),
            TypeDistribution::PowerCdf { gamma, .. } => {
                let u = self.unit(theta);
                if u >= 1.0 {
                    return 0.0;
                }
                let f = gamma * pow(u, gamma - 1.0) / (b - a);
                if f <= 0.0 {
                    f64::INFINITY
                } else {
                    (1.0 - pow(u, gamma)) / f
                }
            }
        }
    }
}

fn check_support(a: f64, b: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain(
            "support",
            if a.is_finite() { b } else { a },
            "bounds must be finite",
        ));
    }
    if !(a < b) {
        return Err(Error::domain("support", b - a, "support must be non-degenerate"));
    }
    Ok(())
}

/// Fixed-rate or withholding source with utility `θ_s·log(1 + r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceModel {
    Inelastic { rate: f64 },
    Elastic { rate: f64, theta_s: f64 },
}

impl SourceModel {
    #[inline]
    pub fn rate(&self) -> f64 {
        match *self {
            SourceModel::Inelastic { rate } | SourceModel::Elastic { rate, .. } => rate,
        }
    }

    pub fn is_elastic(&self) -> bool {
        matches!(self, SourceModel::Elastic { .. })
    }

    /// `W_s(θ_s, r)`; zero for an inelastic source.
    pub fn utility(&self, r: f64) -> f64 {
        match *self {
            SourceModel::Inelastic { .. } => 0.0,
            SourceModel::Elastic { rate, theta_s } => theta_s * log(1.0 + r.min(rate)),
        }
    }

    /// Overflow-link cost `C_s(θ_s, r_0) = W_s(r_s) - W_s(r_s - r_0)`.
    #[inline]
    pub fn overflow_cost(&self, r0: f64) -> f64 {
        match *self {
            SourceModel::Inelastic { .. } => 0.0,
            SourceModel::Elastic { rate, theta_s } => theta_s * (log(1.0 + rate) - log(1.0 + rate - r0)),
        }
    }

    /// `c_s(θ_s, r_0)`.
    #[inline]
    pub fn overflow_marginal(&self, r0: f64) -> f64 {
        match *self {
            SourceModel::Inelastic { .. } => f64::INFINITY,
            SourceModel::Elastic { rate, theta_s } => theta_s / (1.0 + rate - r0),
        }
    }

    /// `∂²C_s/∂r_0²`.
    #[inline]
    pub fn overflow_slope(&self, r0: f64) -> f64 {
        match *self {
            SourceModel::Inelastic { .. } => 0.0,
            SourceModel::Elastic { rate, theta_s } => {
                let d = 1.0 + rate - r0;
                theta_s / (d * d)
            }
        }
    }

    /// Withheld rate minimizing `C_s(r_0) + p·(r_s - r_0)` at a unit price `p`,
    /// and its derivative in `p` (zero when clamped).
    pub fn withheld_response(&self, price: f64) -> (f64, f64) {
        match *self {
            SourceModel::Inelastic { .. } => (0.0, 0.0),
            SourceModel::Elastic { rate, theta_s } => {
                if price <= self.overflow_marginal(0.0) {
                    return (0.0, 0.0);
                }
                // c_s(r_0) = θ_s / (1 + r_s - r_0) = p
                let r0 = 1.0 + rate - theta_s / price;
                if r0 >= rate {
                    (rate, 0.0)
                } else {
                    (r0, 1.0 / self.overflow_slope(r0))
                }
            }
        }
    }
}

/// One relay: its cost family and the prior on its type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relay {
    pub cost: CostModel,
    pub dist: TypeDistribution,
}

impl Relay {
    pub fn new(cost: CostModel, dist: TypeDistribution) -> Self {
        Relay { cost, dist }
    }
}

/// A source and an ordered, non-empty list of relays.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    source: SourceModel,
    relays: Vec<Relay>,
}

impl Scenario {
    pub fn new(source: SourceModel, relays: Vec<Relay>) -> Result<Self> {
        if relays.is_empty() {
            return Err(Error::InvalidScenario("at least one relay is required".into()));
        }
        let rate = source.rate();
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::domain("r_s", rate, "source rate must be positive"));
        }
        if let SourceModel::Elastic { theta_s, .. } = source {
            if !(theta_s.is_finite() && theta_s > 0.0) {
                return Err(Error::domain("theta_s", theta_s, "utility parameter must be positive"));
            }
        }
        for (i, relay) in relays.iter().enumerate() {
            let (lo, hi) = relay.dist.support();
            if !(lo < hi) {
                return Err(Error::InvalidScenario(format!("relay {i}: degenerate support")));
            }
            if lo < 0.0 {
                return Err(Error::InvalidScenario(format!(
                    "relay {i}: types must be non-negative, support starts at {lo}"
                )));
            }
            if relay.cost.family() == CostFamily::Mm1Delay && lo <= rate {
                return Err(Error::InvalidScenario(format!(
                    "relay {i}: M/M/1 capacity {lo} must exceed the source rate {rate}"
                )));
            }
        }
        Ok(Scenario { source, relays })
    }

    /// Inelastic scenario with `n` copies of the same relay.
    pub fn symmetric(cost: CostModel, dist: TypeDistribution, n: usize, rate: f64) -> Result<Self> {
        Scenario::new(SourceModel::Inelastic { rate }, alloc::vec![Relay::new(cost, dist); n])
    }

    pub fn source(&self) -> &SourceModel {
        &self.source
    }

    pub fn relays(&self) -> &[Relay] {
        &self.relays
    }

    pub fn relay(&self, i: usize) -> &Relay {
        &self.relays[i]
    }

    pub fn len(&self) -> usize {
        self.relays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relays.is_empty()
    }

    pub fn rate(&self) -> f64 {
        self.source.rate()
    }

    /// Same relays and source parameter with a different source rate.
    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        let source = match self.source {
            SourceModel::Inelastic { .. } => SourceModel::Inelastic { rate },
            SourceModel::Elastic { theta_s, .. } => SourceModel::Elastic { rate, theta_s },
        };
        Scenario::new(source, self.relays.clone())
    }

    /// All relays share one cost model and one type distribution.
    pub fn is_symmetric(&self) -> bool {
        self.relays.windows(2).all(|w| w[0] == w[1])
    }

    /// Checks that `theta` has one entry per relay, each inside its support.
    pub fn check_types(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.relays.len() {
            return Err(Error::InvalidScenario(format!(
                "expected {} types, got {}",
                self.relays.len(),
                theta.len()
            )));
        }
        for (relay, &t) in self.relays.iter().zip(theta) {
            let (lo, hi) = relay.dist.support();
            if !(t >= lo && t <= hi) || t <= 0.0 {
                return Err(Error::domain("theta", t, "type outside relay support"));
            }
        }
        Ok(())
    }
}

/// Traffic split `(r_0, r_1..r_n)` summing to the source rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub withheld: f64,
    pub rates: Vec<f64>,
}

impl Allocation {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(withheld: f64, rates: Vec<f64>, total: f64) -> Result<Self> {
        let alloc = Allocation { withheld, rates };
        alloc.check(total)?;
        Ok(alloc)
    }

    pub fn check(&self, total: f64) -> Result<()> {
        if !(self.withheld >= 0.0) {
            return Err(Error::domain(
                "r_0",
                self.withheld,
                "withheld rate must be non-negative",
            ));
        }
        if let Some(&r) = self.rates.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::domain("r_i", r, "rates must be non-negative"));
        }
        let sum = self.withheld + self.rates.iter().sum::<f64>();
        if fabs(sum - total) > Self::SUM_TOLERANCE * total.max(1.0) {
            return Err(Error::domain("sum of rates", sum, "allocation must route exactly r_s"));
        }
        Ok(())
    }

    /// Checks shape, feasibility and the inelastic `r_0 = 0` rule.
    pub fn check_for(&self, scenario: &Scenario) -> Result<()> {
        if self.rates.len() != scenario.len() {
            return Err(Error::InvalidScenario(format!(
                "allocation has {} rates for {} relays",
                self.rates.len(),
                scenario.len()
            )));
        }
        if !scenario.source().is_elastic() && self.withheld != 0.0 {
            return Err(Error::domain("r_0", self.withheld, "inelastic source cannot withhold"));
        }
        self.check(scenario.rate())
    }
}

/// A contract: rates plus transfers to each relay.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub allocation: Allocation,
    pub transfers: Vec<f64>,
}

impl Outcome {
    pub fn new(allocation: Allocation, transfers: Vec<f64>) -> Result<Self> {
        if let Some(&t) = transfers.iter().find(|t| !(**t >= 0.0)) {
            return Err(Error::domain("t_i", t, "transfers must be non-negative"));
        }
        Ok(Outcome { allocation, transfers })
    }
}

/// Strictly decreasing map from type to unit price, with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub enum PricingStrategy {
    /// Closed-form symmetric equilibrium price, backed by a dense table for
    /// inverse lookups.
    ClosedFormSymmetric {
        cost: CostModel,
        dist: TypeDistribution,
        n: usize,
        rate: f64,
        table: PriceTable,
    },
    Tabulated(PriceTable),
}

/// Sorted `(θ, p)` pairs with `θ` increasing and `p` nonincreasing,
/// interpolated piecewise-linearly in both directions. Only a monopolist's
/// table is flat.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    thetas: Vec<f64>,
    prices: Vec<f64>,
}

impl PriceTable {
    pub fn new(thetas: Vec<f64>, prices: Vec<f64>) -> Result<Self> {
        if thetas.len() != prices.len() || thetas.len() < 2 {
            return Err(Error::Config("price table needs at least two matching points".into()));
        }
        for k in 1..thetas.len() {
            if !(thetas[k] > thetas[k - 1]) {
                return Err(Error::domain("theta", thetas[k], "table types must increase"));
            }
            if !(prices[k] <= prices[k - 1]) || !prices[k].is_finite() {
                return Err(Error::domain(
                    "price",
                    prices[k],
                    "table prices must be finite and nonincreasing",
                ));
            }
        }
        Ok(PriceTable { thetas, prices })
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.prices.windows(2).all(|w| w[1] < w[0])
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// Largest gap between consecutive tabulated types.
    pub fn spacing(&self) -> f64 {
        self.thetas.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn price(&self, theta: f64) -> f64 {
        let t = &self.thetas;
        if theta <= t[0] {
            return self.prices[0];
        }
        if theta >= t[t.len() - 1] {
            return self.prices[t.len() - 1];
        }
        let k = t.partition_point(|&x| x <= theta);
        let (x0, x1) = (t[k - 1], t[k]);
        let (y0, y1) = (self.prices[k - 1], self.prices[k]);
        y0 + (y1 - y0) * (theta - x0) / (x1 - x0)
    }

    /// Type whose price is `p`; `None` outside the tabulated price range
    /// (`Some(Less)` below the lowest price, `Some(Greater)` above the highest).
    pub fn inverse(&self, p: f64) -> core::result::Result<f64, core::cmp::Ordering> {
        let last = self.prices.len() - 1;
        if p < self.prices[last] {
            return Err(core::cmp::Ordering::Less);
        }
        if p > self.prices[0] {
            return Err(core::cmp::Ordering::Greater);
        }
        // prices decrease: find first index with price <= p
        let k = self.prices.partition_point(|&x| x > p);
        if k == 0 {
            return Ok(self.thetas[0]);
        }
        let (y0, y1) = (self.prices[k - 1], self.prices[k]);
        let (x0, x1) = (self.thetas[k - 1], self.thetas[k]);
        Ok(x0 + (x1 - x0) * (p - y0) / (y1 - y0))
    }
}

impl PricingStrategy {
    pub fn tabulated(thetas: Vec<f64>, prices: Vec<f64>) -> Result<Self> {
        Ok(PricingStrategy::Tabulated(PriceTable::new(thetas, prices)?))
    }

    pub fn table(&self) -> &PriceTable {
        match self {
            PricingStrategy::ClosedFormSymmetric { table, .. } | PricingStrategy::Tabulated(table) => table,
        }
    }

    /// `p(θ)`. Tabulated strategies clamp outside their type range.
    pub fn price(&self, theta: f64) -> f64 {
        match self {
            PricingStrategy::ClosedFormSymmetric {
                cost,
                dist,
                n,
                rate,
                table,
            } => {
                crate::pricing::symmetric_bne_price(cost, dist, *n, *rate, theta).unwrap_or_else(|_| table.price(theta))
            }
            PricingStrategy::Tabulated(table) => table.price(theta),
        }
    }

    /// `w(p)`, clamped to the support ends of `dist` outside the price range:
    /// prices above every tabulated price map to `θ̲`, prices below to `θ̄`.
    pub fn inverse(&self, p: f64, dist: &TypeDistribution) -> f64 {
        let (lo, hi) = dist.support();
        match self.table().inverse(p) {
            Ok(theta) => theta,
            Err(core::cmp::Ordering::Less) => hi,
            Err(_) => lo,
        }
    }
}

/// Draws `count` type vectors by inverse-cdf sampling, deterministic in `seed`.
pub fn sample_types(scenario: &Scenario, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            scenario
                .relays()
                .iter()
                .map(|relay| relay.dist.quantile(open_unit(&mut rng)))
                .collect()
        })
        .collect()
}
