use griddispatch_core::market::{
    aging_cost, performance_index, step_revenue, synthesize_scenario, MarketAccount, MarketParams, RegulationScenario,
};
use proptest::prelude::*;

fn account(capacity: f64) -> MarketAccount {
    MarketAccount::new(MarketParams::with_capacity(capacity, 200.0)).unwrap()
}

#[test]
fn revenue_hand_values() {
    let acct = account(100.0);
    assert_eq!(step_revenue(&acct, 0.0, 0.5, 3600.0), 0.0);
    assert!((step_revenue(&acct, 1.0, 0.5, 3600.0) - 50.0).abs() < 1e-12);
    assert!((step_revenue(&acct, 0.5, 0.5, 3600.0) - 25.0).abs() < 1e-12);
}

#[test]
fn aging_hand_values() {
    assert_eq!(aging_cost(&[0.0, 0.0], 0.25, 0.05), 0.0);
    assert!((aging_cost(&[10.0, -10.0], 0.25, 0.05) - 0.25).abs() < 1e-15);
    assert_eq!(aging_cost(&[10.0, -3.0], 0.25, 0.0), 0.0);
}

#[test]
fn synthesized_series_is_reproducible_and_bounded() {
    let a = synthesize_scenario(7, 10, 4.0).unwrap();
    let b = synthesize_scenario(7, 10, 4.0).unwrap();
    assert_eq!(a, b);
    let long = synthesize_scenario(3, 5000, 4.0).unwrap();
    assert!(long.instructions().iter().all(|r| r.abs() <= 1.0));
    assert!(long.prices().iter().all(|&p| p >= 0.0));
    assert_ne!(synthesize_scenario(8, 10, 4.0).unwrap().instructions(), a.instructions());
}

#[test]
fn scenario_validation() {
    assert!(RegulationScenario::new("x", 4.0, vec![1.3], vec![0.5]).is_err());
    assert!(RegulationScenario::new("x", 4.0, vec![0.3], vec![-0.5]).is_err());
    assert!(RegulationScenario::new("x", 4.0, vec![], vec![]).is_err());
    assert!(synthesize_scenario(1, 0, 4.0).is_err());
}

proptest! {
    #[test]
    fn index_is_bounded_and_symmetric(
        c in 0.1f64..100.0,
        r in -1.0f64..1.0,
        b in -150.0f64..150.0,
        w in 0.0f64..2.0,
    ) {
        let x = performance_index(c, r, b, w, 0.02 * c);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(x, performance_index(c, -r, -b, w, 0.02 * c));
    }

    #[test]
    fn index_is_one_only_for_exact_tracking(
        c in 1.0f64..100.0,
        r in 0.05f64..1.0,
        err in 1e-6f64..10.0,
        w in 0.01f64..2.0,
    ) {
        prop_assert_eq!(performance_index(c, r, c * r, w, 0.0), 1.0);
        prop_assert!(performance_index(c, r, c * r + err, w, 0.0) < 1.0);
    }

    #[test]
    fn revenue_is_monotone(
        p1 in 0.0f64..1.0,
        p2 in 0.0f64..1.0,
        c1 in 0.0f64..100.0,
        c2 in 0.0f64..100.0,
        price in 0.0f64..2.0,
    ) {
        let (plo, phi) = (p1.min(p2), p1.max(p2));
        let (clo, chi) = (c1.min(c2), c1.max(c2));
        prop_assert!(step_revenue(&account(clo), plo, price, 4.0) <= step_revenue(&account(clo), phi, price, 4.0));
        prop_assert!(step_revenue(&account(clo), plo, price, 4.0) <= step_revenue(&account(chi), plo, price, 4.0));
    }
}
