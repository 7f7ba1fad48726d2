use proptest::prelude::*;
use relaynet_core::verify::assumption_audit;
use relaynet_core::{
    cost_eval, marginal_eval, sample_types, CostFamily, CostModel, Error, Scenario, SourceModel, TypeDistribution,
};

#[test]
fn power_cdf_samples_match_cdf() {
    let dist = TypeDistribution::power_cdf(0.0, 1.0, 2.0).unwrap();
    let scenario = Scenario::symmetric(CostModel::new(CostFamily::ExpOverTheta), dist, 1, 1.0).unwrap();
    let mut xs: Vec<f64> = sample_types(&scenario, 100_000, 17).into_iter().map(|t| t[0]).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = dist.cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "{ks}");
}

#[test]
fn queue_cost_and_marginal() {
    let q = CostModel::new(CostFamily::Mm1Delay);
    assert_eq!(cost_eval(&q, 2.0, 1.0).unwrap(), 1.0);
    assert_eq!(marginal_eval(&q, 2.0, 1.0).unwrap(), 2.0);
    assert!(matches!(
        cost_eval(&q, 2.0, 2.0),
        Err(Error::Domain { argument: "r", .. })
    ));
}

#[test]
fn queue_scenarios_need_capacity_above_rate() {
    let q = CostModel::new(CostFamily::Mm1Delay);
    assert!(Scenario::symmetric(q, TypeDistribution::uniform(1.0, 3.0).unwrap(), 2, 1.0).is_err());
    assert!(Scenario::symmetric(q, TypeDistribution::uniform(1.5, 3.0).unwrap(), 2, 1.0).is_ok());
}

#[test]
fn built_in_families_pass_the_assumption_audit() {
    let dist = TypeDistribution::uniform(1.0, 2.0).unwrap();
    for family in [
        CostFamily::PowerExp,
        CostFamily::ExpOverTheta,
        CostFamily::QuadraticOverTheta,
    ] {
        let report = assumption_audit(&CostModel::new(family), &dist, 1.0, (20, 20)).unwrap();
        assert!(report.pass, "{family:?}: {report:?}");
    }
}

#[test]
fn overflow_link_has_zero_cost_at_zero() {
    let s = SourceModel::Elastic {
        rate: 2.0,
        theta_s: 3.0,
    };
    assert_eq!(s.overflow_cost(0.0), 0.0);
    assert!(s.overflow_marginal(1.0) > s.overflow_marginal(0.5));
}

proptest! {
    #[test]
    fn quantile_inverts_cdf(a in 0.0f64..2.0, w in 0.1f64..3.0, gamma in 0.3f64..4.0, u in 0.0f64..1.0) {
        let d = TypeDistribution::power_cdf(a, a + w, gamma).unwrap();
        let t = d.quantile(u);
        prop_assert!(t >= a && t <= a + w);
        prop_assert!((d.cdf(t) - u).abs() < 1e-9);
    }

    #[test]
    fn costs_are_increasing_and_convex_in_rate(
        family in 0u8..4, theta in 1.5f64..3.0, r in 0.0f64..0.9, h in 0.001f64..0.1,
    ) {
        let fam = [CostFamily::PowerExp, CostFamily::ExpOverTheta, CostFamily::QuadraticOverTheta, CostFamily::Mm1Delay][family as usize];
        let c = CostModel::new(fam);
        let (a, b, d) = (c.cost(theta, r), c.cost(theta, r + h), c.cost(theta, r + 2.0 * h));
        prop_assert!(b > a);
        prop_assert!(d - 2.0 * b + a >= -1e-12);
        prop_assert!(c.marginal(theta, r) > 0.0);
    }
}

#[test]
fn overflow_cost_grows_with_source_utility_weight() {
    let low = SourceModel::Elastic {
        rate: 1.0,
        theta_s: 1.0,
    };
    let high = SourceModel::Elastic {
        rate: 1.0,
        theta_s: 2.0,
    };
    for r0 in [0.1, 0.5, 1.0] {
        assert!(high.overflow_cost(r0) > low.overflow_cost(r0));
    }
}

#[test]
fn zero_source_rate_is_rejected() {
    let dist = TypeDistribution::uniform(1.0, 2.0).unwrap();
    let err = Scenario::symmetric(CostModel::new(CostFamily::PowerExp), dist, 2, 0.0).unwrap_err();
    assert!(matches!(err, Error::Domain { argument: "r_s", .. }));
}
