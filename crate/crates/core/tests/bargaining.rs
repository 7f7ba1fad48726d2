use proptest::prelude::*;
use relaynet_core::bargaining::{
    interim_transfers, solve_virtual_allocation, solve_virtual_allocation_with, truth_telling_audit, virtual_cost,
    VirtualCostView, VirtualMechanism, VirtualOptions,
};
use relaynet_core::numeric::linspace;
use relaynet_core::social::total_cost;
use relaynet_core::{CostFamily, CostModel, Relay, Scenario, SourceModel, TypeDistribution};

fn exp_uniform(n: usize) -> Scenario {
    Scenario::symmetric(
        CostModel::new(CostFamily::ExpOverTheta),
        TypeDistribution::uniform(0.0, 1.0).unwrap(),
        n,
        1.0,
    )
    .unwrap()
}

#[test]
fn virtual_cost_of_exponential_family_on_unit_uniform() {
    let view = VirtualCostView::new(
        CostModel::new(CostFamily::ExpOverTheta),
        TypeDistribution::uniform(0.0, 1.0).unwrap(),
    );
    for t in linspace(0.01, 1.0, 100) {
        for r in linspace(0.0, 1.0, 100) {
            let j = virtual_cost(&view, t, r).unwrap();
            let exact = r.exp_m1() / (t * t);
            assert!(
                (j - exact).abs() <= 8.0 * f64::EPSILON * exact,
                "{t} {r}: {j} vs {exact}"
            );
        }
    }
}

#[test]
fn virtual_cost_equals_cost_at_top_type() {
    let cost = CostModel::new(CostFamily::PowerExp);
    let view = VirtualCostView::new(cost, TypeDistribution::power_cdf(1.0, 2.0, 3.0).unwrap());
    for r in linspace(0.0, 1.0, 11) {
        assert_eq!(virtual_cost(&view, 2.0, r).unwrap(), cost.cost(2.0, r));
    }
}

#[test]
fn grid_fallback_agrees_with_equalization() {
    let scenario = Scenario::new(
        SourceModel::Inelastic { rate: 1.0 },
        vec![
            Relay::new(
                CostModel::new(CostFamily::PowerExp),
                TypeDistribution::uniform(1.0, 2.0).unwrap(),
            ),
            Relay::new(
                CostModel::new(CostFamily::QuadraticOverTheta),
                TypeDistribution::uniform(0.5, 1.5).unwrap(),
            ),
        ],
    )
    .unwrap();
    let theta = [1.4, 1.1];
    let exact = solve_virtual_allocation(&scenario, &theta).unwrap();
    assert!(exact.convex);
    let options = VirtualOptions {
        force_grid: true,
        grid_cells: 2000,
        ..VirtualOptions::default()
    };
    let grid = solve_virtual_allocation_with(&scenario, &theta, &options).unwrap();
    assert!(grid
        .candidates
        .iter()
        .any(|a| (a.rates[0] - exact.allocation.rates[0]).abs() <= 1e-3));
}

#[test]
fn information_rent_is_nondecreasing_in_type() {
    let scenario = exp_uniform(2);
    let mechanism = VirtualMechanism::new(&scenario);
    let thetas = linspace(0.05, 1.0, 20);
    let table = interim_transfers(&scenario, 0, &thetas, |t: &[f64]| mechanism.allocate(t), 2000, 11).unwrap();
    for w in table.windows(2) {
        assert!(w[1].rent >= w[0].rent - 1e-12);
    }
}

#[test]
fn small_truth_audit_passes() {
    let scenario = exp_uniform(2);
    let grid = linspace(0.05, 1.0, 8);
    let audit = truth_telling_audit(&scenario, &grid, &grid, 1000, 5).unwrap();
    assert!(audit.pass, "{audit:?}");
}

#[test]
fn a_lying_rule_fails_the_audit() {
    let scenario = exp_uniform(2);
    let mechanism = VirtualMechanism::new(&scenario);
    let grid = linspace(0.05, 1.0, 8);
    // allocation that decreases in own type breaks incentive compatibility
    let audit = relaynet_core::bargaining::truth_telling_audit_with(
        &scenario,
        &grid,
        &grid,
        |t: &[f64]| {
            let flipped: Vec<f64> = t.iter().map(|x| (1.001 - x).clamp(0.001, 1.0)).collect();
            mechanism.allocate(&flipped)
        },
        1000,
        5,
    )
    .unwrap();
    assert!(!audit.pass);
}

#[test]
fn irregular_prior_breaks_monotonicity() {
    // (1 - F)/f rises near the bottom of the support when γ < 1
    let scenario = Scenario::new(
        SourceModel::Inelastic { rate: 2.0 },
        vec![
            Relay::new(
                CostModel::new(CostFamily::QuadraticOverTheta),
                TypeDistribution::power_cdf(0.5, 1.5, 0.5).unwrap(),
            ),
            Relay::new(
                CostModel::new(CostFamily::QuadraticOverTheta),
                TypeDistribution::uniform(1.0, 3.0).unwrap(),
            ),
        ],
    )
    .unwrap();
    let rate = |t: f64| solve_virtual_allocation(&scenario, &[t, 2.0]).unwrap().allocation.rates[0];
    assert!(rate(0.53) < rate(0.51));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn allocation_is_monotone_in_own_type(
        others in prop::collection::vec(0.05f64..1.0, 2),
        gamma in 0.5f64..3.0,
    ) {
        let scenario = Scenario::new(
            SourceModel::Inelastic { rate: 1.0 },
            vec![
                Relay::new(CostModel::new(CostFamily::ExpOverTheta), TypeDistribution::uniform(0.0, 1.0).unwrap()),
                Relay::new(CostModel::new(CostFamily::ExpOverTheta), TypeDistribution::power_cdf(0.0, 1.0, gamma).unwrap()),
                Relay::new(CostModel::new(CostFamily::PowerExp), TypeDistribution::uniform(0.0, 1.0).unwrap()),
            ],
        )
        .unwrap();
        let mut last = -1.0;
        for t in linspace(0.02, 1.0, 30) {
            let theta = [t, others[0], others[1]];
            let r = solve_virtual_allocation(&scenario, &theta).unwrap().allocation.rates[0];
            prop_assert!(r >= last - 1e-9);
            last = r;
        }
    }

    #[test]
    fn virtual_allocation_costs_no_less_than_optimum(
        theta in prop::collection::vec(0.05f64..1.0, 2),
    ) {
        let scenario = exp_uniform(2);
        let v = solve_virtual_allocation(&scenario, &theta).unwrap();
        let (opt, _) = relaynet_core::social::solve_social_optimum(&scenario, &theta).unwrap();
        let a = total_cost(&scenario, &theta, &v.allocation).unwrap();
        let b = total_cost(&scenario, &theta, &opt).unwrap();
        prop_assert!(a >= b * (1.0 - 1e-12));
    }
}
