mod common;

use common::{c, four_node, three_phase, two_node};
use griddispatch_core::grid::{count_violations, solve_linear, solve_nonlinear_sweep, GridError};
use griddispatch_core::{Feeder, InjectionSet, Phase};
use num_complex::Complex64;
use proptest::prelude::*;

/// Random injections on every existing node phase except the source.
fn injections(f: &Feeder, values: &[(f64, f64)]) -> InjectionSet {
    let mut inj = InjectionSet::new();
    let mut k = 0;
    for (n, node) in f.nodes().iter().enumerate() {
        if n == f.source() {
            continue;
        }
        for ph in node.phases.iter() {
            let (p, q) = values[k % values.len()];
            inj.push(n, ph, p, q);
            k += 1;
        }
    }
    inj
}

/// Squared-voltage drop of phase `p` across a line from its phasor form:
/// `2 Re[conj(V_p) sum_q z_pq I_q]` at nominal balanced voltages.
fn phasor_drop(f: &Feeder, line: usize, p: Phase, flows: &[Complex64; 3]) -> f64 {
    let l = &f.lines()[line];
    let v = |ph: Phase| Complex64::from_polar(1.0, ph.angle());
    let mut dv = Complex64::new(0.0, 0.0);
    for q in l.phases.iter() {
        let current = (flows[q.index()] / v(q)).conj();
        dv += l.impedance[p.index()][q.index()] * current;
    }
    2.0 * (v(p).conj() * dv).re
}

#[test]
fn drops_match_phasor_linearization() {
    let f = three_phase(1.0);
    let inj = injections(&f, &[(0.01, 0.0), (-0.02, 0.005)]);
    let sol = solve_linear(&f, &inj).unwrap();
    for (k, l) in f.lines().iter().enumerate() {
        let flows = [0, 1, 2].map(|i| c(sol.p_flow[k][i], sol.q_flow[k][i]));
        for p in l.phases.iter() {
            let lhs = sol.v_sq[l.from][p.index()] - sol.v_sq[l.to][p.index()];
            let rhs = phasor_drop(&f, k, p, &flows);
            assert!((lhs - rhs).abs() < 1e-12, "line {k} phase {p}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn flows_conserve_power_at_every_node() {
    let f = three_phase(1.0);
    let inj = injections(&f, &[(0.015, -0.01), (0.0, 0.02), (-0.03, 0.0)]);
    let sol = solve_linear(&f, &inj).unwrap();
    let mut injected = vec![[c(0.0, 0.0); 3]; f.nodes().len()];
    for e in inj.entries() {
        injected[e.node][e.phase.index()] += c(e.p, e.q);
    }
    for (n, node) in f.nodes().iter().enumerate() {
        if n == f.source() {
            continue;
        }
        let parent = f.parent_line(n).unwrap();
        for ph in node.phases.iter() {
            let i = ph.index();
            let mut balance = c(sol.p_flow[parent][i], sol.q_flow[parent][i]) - f.loads()[n][i] + injected[n][i];
            for &child in f.child_lines(n) {
                balance -= c(sol.p_flow[child][i], sol.q_flow[child][i]);
            }
            assert!(balance.norm() < 1e-9, "node {n} phase {ph}: {balance}");
        }
    }
}

#[test]
fn source_voltage_is_held() {
    let f = three_phase(1.0);
    let sol = solve_linear(&f, &injections(&f, &[(0.05, 0.0)])).unwrap();
    for ph in f.nodes()[f.source()].phases.iter() {
        assert_eq!(sol.v_sq[f.source()][ph.index()], f.source_voltage() * f.source_voltage());
    }
}

proptest! {
    #[test]
    fn deviation_is_linear_in_injections(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        x in proptest::collection::vec((-0.05f64..0.05, -0.05f64..0.05), 8),
        y in proptest::collection::vec((-0.05f64..0.05, -0.05f64..0.05), 8),
    ) {
        let f = three_phase(0.0);
        let one = injections(&f, &x);
        let two = injections(&f, &y);
        let dev = |inj: &InjectionSet| {
            let s = solve_linear(&f, inj).unwrap();
            s.v_sq.iter().map(|row| row.map(|v| if v == 0.0 { 0.0 } else { v - 1.0 })).collect::<Vec<_>>()
        };
        let d1 = dev(&one);
        let d2 = dev(&two);
        let dc = dev(&one.combine(a, &two, b));
        for n in 0..d1.len() {
            for ph in f.nodes()[n].phases.iter() {
                let i = ph.index();
                prop_assert!((dc[n][i] - (a * d1[n][i] + b * d2[n][i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn leaf_withdrawal_never_raises_path_voltage(extra in 0.0f64..0.1, leaf_phase in 0usize..2) {
        let f = three_phase(1.0);
        let leaf = f.node_index("e").unwrap();
        let ph = Phase::from_index(leaf_phase).unwrap();
        let base = solve_linear(&f, &InjectionSet::new()).unwrap();
        let mut inj = InjectionSet::new();
        inj.push(leaf, ph, -extra, 0.0);
        let loaded = solve_linear(&f, &inj).unwrap();
        let mut n = leaf;
        loop {
            prop_assert!(loaded.v_sq[n][ph.index()] <= base.v_sq[n][ph.index()] + 1e-15);
            match f.parent_line(n) {
                Some(l) => n = f.lines()[l].from,
                None => break,
            }
        }
    }
}

#[test]
fn linear_model_tracks_sweep_at_moderate_loading() {
    // total active load 0.3 pu at full scale; half of that here
    let full = three_phase(1.0);
    let scale = 0.15 / full.total_active_load();
    let f = three_phase(scale);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let w = k as f64 / 100.0;
        let vals = [(0.02 * (w - 0.5), 0.01 * w), (-0.015 * w, 0.0), (0.01, -0.01 * w)];
        let inj = injections(&f, &vals);
        let lin = solve_linear(&f, &inj).unwrap();
        let nl = solve_nonlinear_sweep(&f, &inj, 1e-10, 200).unwrap();
        for ((_, _, a), (_, _, b)) in lin.voltages().zip(nl.voltages()) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 5e-3, "worst deviation {worst}");
}

#[test]
fn sweep_agrees_with_linear_when_unloaded() {
    let f = four_node().with_scaled_loads(0.0);
    let lin = solve_linear(&f, &InjectionSet::new()).unwrap();
    let nl = solve_nonlinear_sweep(&f, &InjectionSet::new(), 1e-10, 50).unwrap();
    for ((_, _, a), (_, _, b)) in lin.voltages().zip(nl.voltages()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn heavy_overload_does_not_converge() {
    let f = two_node(c(0.01, 0.01), c(0.1, 0.05)).with_scaled_loads(500.0);
    let err = solve_nonlinear_sweep(&f, &InjectionSet::new(), 1e-10, 200).unwrap_err();
    assert!(matches!(err, GridError::NonConvergence { .. }));
}

#[test]
fn violations_exclude_the_source() {
    let f = four_node();
    let mut inj = InjectionSet::new();
    inj.push(2, Phase::A, -2.0, 0.0);
    let sol = solve_linear(&f, &inj).unwrap();
    let expected = sol
        .voltages()
        .filter(|&(n, _, v)| n != f.source() && !(0.95..=1.05).contains(&v))
        .count();
    assert!(expected > 0);
    assert_eq!(count_violations(&sol, 0.95, 1.05), expected);
    assert_eq!(count_violations(&sol, 0.0, 10.0), 0);
}
