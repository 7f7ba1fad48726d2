use proptest::prelude::*;
use relaynet_core::efficiency::{asymptotic_probe, crossing_realizations, ProbeOptions};
use relaynet_core::numeric::linspace;
use relaynet_core::pricing::{
    asymmetric_ode_rhs, elastic_ode_rhs, solve_asymmetric_bne, symmetric_bne_price, ElasticReading, ShootingConfig,
};
use relaynet_core::verify::{best_response_gain, best_response_gain_at, ode_residual};
use relaynet_core::{CostFamily, CostModel, PricingStrategy, Relay, Scenario, SourceModel, TypeDistribution};

fn exp_cost() -> CostModel {
    CostModel::new(CostFamily::ExpOverTheta)
}

fn uniform_vs_power() -> Scenario {
    Scenario::new(
        SourceModel::Inelastic { rate: 1.0 },
        vec![
            Relay::new(exp_cost(), TypeDistribution::uniform(0.0, 1.0).unwrap()),
            Relay::new(exp_cost(), TypeDistribution::power_cdf(0.0, 1.0, 2.0).unwrap()),
        ],
    )
    .unwrap()
}

#[test]
fn monopoly_price_ignores_own_type() {
    let cost = CostModel::new(CostFamily::PowerExp);
    let dist = TypeDistribution::uniform(1.0, 2.0).unwrap();
    for t in linspace(1.0, 2.0, 11) {
        let p = symmetric_bne_price(&cost, &dist, 1, 1.0, t).unwrap();
        assert!((p - 1.0).abs() < 1e-12, "{t} -> {p}");
    }
}

#[test]
fn closed_form_satisfies_first_order_system() {
    let cost = CostModel::new(CostFamily::PowerExp);
    let dist = TypeDistribution::uniform(1.0, 2.0).unwrap();
    for n in [2, 3] {
        let strategy = PricingStrategy::closed_form_symmetric(cost, dist, n, 1.0, 101).unwrap();
        let grid = linspace(1.0, 2.0, 201);
        let res = ode_residual(&strategy, &cost, &dist, n, 1.0, &grid).unwrap();
        assert!(res <= 1e-4, "n={n} residual {res}");
    }
}

#[test]
fn symmetric_equilibrium_has_no_profitable_deviation() {
    let cost = CostModel::new(CostFamily::PowerExp);
    let dist = TypeDistribution::uniform(1.0, 2.0).unwrap();
    let scenario = Scenario::symmetric(cost, dist, 2, 1.0).unwrap();
    let strategy = PricingStrategy::closed_form_symmetric(cost, dist, 2, 1.0, 101).unwrap();
    let strategies = vec![strategy.clone(), strategy.clone()];
    let p_max = strategy.price(1.0);
    let grid = linspace(0.3 * p_max, 1.5 * p_max, 1000);
    let threshold = 1e-3 * p_max;
    let mut perturbed: f64 = 0.0;
    for t in linspace(1.02, 1.98, 25) {
        assert!(best_response_gain(&scenario, &strategies, 0, t, &grid) <= threshold);
        let own = 1.1 * strategy.price(t);
        perturbed = perturbed.max(best_response_gain_at(&scenario, &strategies, 0, t, own, &grid));
    }
    assert!(perturbed > 10.0 * threshold, "{perturbed}");
}

#[test]
fn elastic_rhs_matches_inelastic_when_nothing_is_withheld() {
    let relays = vec![
        Relay::new(
            CostModel::new(CostFamily::PowerExp),
            TypeDistribution::uniform(1.0, 2.0).unwrap(),
        ),
        Relay::new(
            CostModel::new(CostFamily::PowerExp),
            TypeDistribution::uniform(1.2, 2.0).unwrap(),
        ),
    ];
    let inelastic = Scenario::new(SourceModel::Inelastic { rate: 1.0 }, relays.clone()).unwrap();
    // θ_s large enough that the source never withholds at these prices
    let elastic = Scenario::new(
        SourceModel::Elastic {
            rate: 1.0,
            theta_s: 100.0,
        },
        relays,
    )
    .unwrap();
    let w = [1.5, 1.6];
    let a = asymmetric_ode_rhs(2.0, &w, &inelastic).unwrap();
    for reading in [ElasticReading::AsPrinted, ElasticReading::WithdrawnRateDerivative] {
        let b = elastic_ode_rhs(2.0, &w, &elastic, reading).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn shooting_reproduces_symmetric_closed_form() {
    let cost = CostModel::new(CostFamily::PowerExp);
    let dist = TypeDistribution::uniform(1.0, 2.0).unwrap();
    let scenario = Scenario::symmetric(cost, dist, 2, 1.0).unwrap();
    let solution = solve_asymmetric_bne(&scenario, &ShootingConfig::default()).unwrap();
    for t in linspace(1.05, 1.95, 10) {
        let exact = symmetric_bne_price(&cost, &dist, 2, 1.0, t).unwrap();
        let shot = solution.strategies[0].price(t);
        assert!((exact - shot).abs() < 1e-4 * exact, "{t}: {exact} vs {shot}");
    }
}

#[test]
fn asymmetric_priors_give_distinct_strategies() {
    let scenario = uniform_vs_power();
    let solution = solve_asymmetric_bne(&scenario, &ShootingConfig::default()).unwrap();
    assert!(solution.diagnostics.start_gap <= 1e-6);
    let (pairs, gap) = crossing_realizations(&scenario, &solution, 40);
    assert!(gap > 1e-3, "gap {gap}");
    assert!(!pairs.is_empty());
    for s in &solution.strategies {
        assert!(s.table().is_strictly_decreasing());
    }
}

#[test]
fn probe_keeps_crossing_inefficiency() {
    let rows = asymptotic_probe(&uniform_vs_power(), &[1.0, 0.1, 0.01], &ProbeOptions::default()).unwrap();
    for row in &rows {
        assert!(row.realizations > 0);
        assert!(row.rho_min > 1.01, "{row:?}");
    }
    assert!(rows[2].counterpart_max < 1.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symmetric_price_is_decreasing_and_covers_cost(
        t1 in 1.0f64..2.0, t2 in 1.0f64..2.0, n in 2usize..5, rate in 0.2f64..2.0,
    ) {
        let cost = CostModel::new(CostFamily::PowerExp);
        let dist = TypeDistribution::uniform(1.0, 2.0).unwrap();
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        prop_assume!(hi - lo > 1e-6);
        let p_lo = symmetric_bne_price(&cost, &dist, n, rate, lo).unwrap();
        let p_hi = symmetric_bne_price(&cost, &dist, n, rate, hi).unwrap();
        prop_assert!(p_hi < p_lo);
        prop_assert!(p_hi * rate >= cost.cost(hi, rate) * (1.0 - 1e-12));
    }
}
