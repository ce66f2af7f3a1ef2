mod common;

use common::{battery, four_node, market};
use griddispatch_core::bess::BatterySpec;
use griddispatch_core::env::{action_to_power, discounted_return, Env, EnvConfig, EnvError};
use griddispatch_core::grid::count_violations;
use griddispatch_core::market::{synthesize_scenario, RegulationScenario};
use griddispatch_core::Phase;
use proptest::prelude::*;

fn env_with(fleet: Vec<BatterySpec>, capacity: f64, scenario: RegulationScenario, steps: usize) -> Env {
    let mut cfg = EnvConfig::new(four_node(), fleet, market(capacity));
    cfg.episode_steps = steps;
    Env::new(cfg, scenario).unwrap()
}

fn two_unit_env() -> Env {
    let fleet = vec![battery("b1", "n3", Phase::A), battery("b2", "n4", Phase::A)];
    env_with(fleet, 15.0, synthesize_scenario(9, 300, 4.0).unwrap(), 20)
}

#[test]
fn reset_is_reproducible_and_starts_half_full() {
    let mut env = two_unit_env();
    let a = env.reset(42).unwrap();
    let off = env.offset();
    let b = env.reset(42).unwrap();
    assert_eq!(a, b);
    assert_eq!(env.offset(), off);
    for (e, spec) in a.energy_kwh.iter().zip(&env.config().fleet) {
        assert_eq!(*e, 0.5 * spec.energy_kwh);
    }
    assert_eq!(a.observation.len(), env.observation_len());
    assert!(a.observation.iter().all(|x| x.is_finite()));
}

#[test]
fn baseline_voltages_are_within_limits() {
    let mut env = two_unit_env();
    env.reset(0).unwrap();
    let lim = env.config().feeder.limits();
    assert_eq!(count_violations(env.solution(), lim.v_min, lim.v_max), 0);
}

#[test]
fn idle_fleet_on_zero_signal_earns_full_payment() {
    let sc = RegulationScenario::new("zero", 4.0, vec![0.0; 10], vec![0.5; 10]).unwrap();
    let fleet = vec![battery("b1", "n3", Phase::A)];
    let mut env = env_with(fleet, 8.0, sc, 10);
    env.reset_at(0).unwrap();
    let out = env.step(&[0.0]).unwrap();
    assert_eq!(out.cost, 0.0);
    assert_eq!(out.info.performance, 1.0);
    assert!((out.reward - 0.5 * 8.0 * 4.0 / 3600.0).abs() < 1e-15);
}

#[test]
fn full_battery_cannot_charge() {
    let full = BatterySpec {
        initial_soc: 0.9,
        ..battery("b1", "n3", Phase::A)
    };
    let mut env = env_with(vec![full], 8.0, synthesize_scenario(1, 50, 4.0).unwrap(), 10);
    env.reset_at(0).unwrap();
    let out = env.step(&[1.0]).unwrap();
    assert_eq!(out.info.applied_kw[0], 0.0);
}

#[test]
fn exact_discharge_scores_perfectly() {
    // C = 10 kW, r = 0.5: the battery must inject 5 kW
    let sc = RegulationScenario::new("half", 4.0, vec![0.5; 4], vec![0.5; 4]).unwrap();
    let mut env = env_with(vec![battery("b1", "n3", Phase::A)], 10.0, sc, 4);
    env.reset_at(0).unwrap();
    let range = env.power_ranges()[0];
    let half = 0.5 * (range.1 - range.0);
    let mid = 0.5 * (range.0 + range.1);
    let action = (-5.0 - mid) / half;
    assert!((action_to_power(range, action) + 5.0).abs() < 1e-12);
    let out = env.step(&[action]).unwrap();
    assert!((out.info.performance - 1.0).abs() < 1e-12);
    let revenue = 0.5 * 10.0 * 4.0 / 3600.0;
    let aging = 0.05 * 5.0 * 4.0 / 3600.0;
    assert!((out.reward - (revenue - aging)).abs() < 1e-12);
}

#[test]
fn episode_lifecycle_errors() {
    let mut env = two_unit_env();
    env.reset(3).unwrap();
    assert!(matches!(env.step(&[0.0]), Err(EnvError::ActionLength { .. })));
    for _ in 0..20 {
        env.step(&[0.0, 0.0]).unwrap();
    }
    assert!(env.is_done());
    assert!(matches!(env.step(&[0.0, 0.0]), Err(EnvError::EpisodeOver)));
    let short = RegulationScenario::new("s", 4.0, vec![0.1; 5], vec![0.5; 5]).unwrap();
    let cfg = EnvConfig::new(four_node(), vec![battery("b", "n2", Phase::A)], market(5.0));
    assert!(matches!(Env::new(cfg, short), Err(EnvError::ScenarioTooShort { .. })));
}

#[test]
fn discounted_return_examples() {
    assert_eq!(discounted_return(&[3.0, 5.0, 7.0], 0.0), 3.0);
    assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 1.0), 3.0);
    assert_eq!(discounted_return(&[1.0, 2.0, 4.0], 0.5), 3.0);
}

fn rollout(env: &mut Env, seed: u64, actions: &[(f64, f64)]) -> Vec<(f64, f64, Vec<f64>)> {
    env.reset(seed).unwrap();
    let mut out = Vec::new();
    for &(a, b) in actions.iter().cycle().take(20) {
        let o = env.step(&[a, b]).unwrap();
        out.push((o.reward, o.cost, o.state.observation));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectories_are_deterministic(seed in 0u64..1000, acts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..20)) {
        let mut env = two_unit_env();
        let a = rollout(&mut env, seed, &acts);
        let b = rollout(&mut two_unit_env(), seed, &acts);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn soc_stays_in_bounds_and_cost_matches_voltages(acts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 20)) {
        let mut env = two_unit_env();
        env.reset(5).unwrap();
        for (a, b) in acts {
            let out = env.step(&[a, b]).unwrap();
            for (e, spec) in env.energies().iter().zip(&env.config().fleet) {
                prop_assert!(*e >= spec.e_min() - 1e-12 && *e <= spec.e_max() + 1e-12);
            }
            let lim = env.config().feeder.limits();
            prop_assert_eq!(out.cost, count_violations(env.solution(), lim.v_min, lim.v_max) as f64);
            let all_inside = env.solution().voltages().all(|(_, _, v)| v >= lim.v_min && v <= lim.v_max);
            if all_inside {
                prop_assert_eq!(out.cost, 0.0);
            }
        }
    }

    #[test]
    fn action_map_is_monotone(lo in -10.0f64..0.0, hi in 0.0f64..10.0, a in -1.5f64..1.5, da in 0.0f64..1.0) {
        prop_assert!(action_to_power((lo, hi), a + da) >= action_to_power((lo, hi), a));
    }
}
