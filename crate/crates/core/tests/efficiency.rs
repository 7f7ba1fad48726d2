use proptest::prelude::*;
use relaynet_core::efficiency::{
    asymptotic_probe, monte_carlo_expected_poa, poa_bargaining, poa_pricing, theoretical_bound, BoundKind, Mode,
    ProbeOptions,
};
use relaynet_core::{CostFamily, CostModel, Scenario, TypeDistribution};

fn symmetric(family: CostFamily, a: f64, b: f64, n: usize, rate: f64) -> Scenario {
    Scenario::symmetric(
        CostModel::new(family),
        TypeDistribution::uniform(a, b).unwrap(),
        n,
        rate,
    )
    .unwrap()
}

#[test]
fn linear_marginal_sweep_stays_below_relay_count() {
    for n in [2, 3, 5] {
        let s = symmetric(CostFamily::QuadraticOverTheta, 1.0, 2.0, n, 1.0);
        let summary = monte_carlo_expected_poa(&s, Mode::Pricing, 300, 3).unwrap();
        assert!(summary.max <= n as f64 + 1e-6);
        assert!(summary.min >= 1.0 - 1e-12);
        assert_eq!(summary.bound.unwrap().kind, BoundKind::RelayCount);
    }
}

#[test]
fn narrow_support_approaches_relay_count() {
    let s = symmetric(CostFamily::QuadraticOverTheta, 1.0, 1.0 + 1e-9, 3, 1.0);
    let summary = monte_carlo_expected_poa(&s, Mode::Pricing, 50, 1).unwrap();
    assert!((summary.max - 3.0).abs() < 1e-6);
}

#[test]
fn exponential_sweep_respects_marginal_ratio() {
    let s = symmetric(CostFamily::ExpOverTheta, 0.5, 1.0, 2, 1.0);
    let k = 2.0 * std::f64::consts::E;
    let summary = monte_carlo_expected_poa(&s, Mode::Pricing, 300, 9).unwrap();
    assert!(summary.max <= k + 1e-6);
    assert_eq!(summary.bound.unwrap().kind, BoundKind::MarginalRatio);
}

#[test]
fn summaries_are_reproducible() {
    let s = symmetric(CostFamily::PowerExp, 1.0, 2.0, 3, 1.0);
    let a = monte_carlo_expected_poa(&s, Mode::Bargaining, 100, 42).unwrap();
    let b = monte_carlo_expected_poa(&s, Mode::Bargaining, 100, 42).unwrap();
    assert_eq!(a, b);
    assert!(a.mean >= 1.0);
}

#[test]
fn built_in_families_fail_the_concave_surplus_condition() {
    let s = symmetric(CostFamily::ExpOverTheta, 0.0, 1.0, 2, 1.0);
    let report = theoretical_bound(&s).unwrap();
    assert!(report.virtual_conditions[0]);
    assert!(!report.virtual_conditions[1]);
    assert!(report.bargaining.is_none());
}

#[test]
fn symmetric_probe_tends_to_one() {
    let s = symmetric(CostFamily::ExpOverTheta, 1.0, 2.0, 2, 1.0);
    let options = ProbeOptions {
        types: Some(vec![1.0, 2.0]),
        ..ProbeOptions::default()
    };
    let rows = asymptotic_probe(&s, &[1.0, 0.1, 0.01], &options).unwrap();
    assert!(rows[0].rho_max > 1.01);
    assert!(rows.windows(2).all(|w| w[1].rho_max <= w[0].rho_max));
    assert!(rows[2].rho_max < 1.05);
}

#[test]
fn equal_types_keep_relay_count_at_every_rate() {
    let s = symmetric(CostFamily::QuadraticOverTheta, 1.0, 2.0, 2, 1.0);
    let options = ProbeOptions {
        types: Some(vec![1.5, 1.5]),
        ..ProbeOptions::default()
    };
    for row in asymptotic_probe(&s, &[1.0, 0.1, 0.01], &options).unwrap() {
        assert!((row.rho_max - 2.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ratio_is_at_least_one(
        theta in prop::collection::vec(1.0f64..2.0, 2..5),
        family in 0u8..3,
        rate in 0.05f64..2.0,
    ) {
        let fam = [CostFamily::PowerExp, CostFamily::ExpOverTheta, CostFamily::QuadraticOverTheta][family as usize];
        let s = symmetric(fam, 1.0, 2.0, theta.len(), rate);
        let p = poa_pricing(&s, &theta).unwrap();
        prop_assert!(p.rho >= 1.0 - 1e-12);
        if let Some(b) = p.bound {
            prop_assert!(p.rho <= b.value + 1e-6);
        }
        let q = poa_bargaining(&s, &theta).unwrap();
        prop_assert!(q.rho >= 1.0 - 1e-12);
    }
}
