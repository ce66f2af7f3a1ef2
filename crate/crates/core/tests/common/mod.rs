#![allow(dead_code)]

use griddispatch_core::bess::BatterySpec;
use griddispatch_core::grid::{Bases, Feeder, Line, Node, PhaseSet, VoltageLimits};
use griddispatch_core::market::MarketParams;
use griddispatch_core::Phase;
use num_complex::Complex64;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn node(name: &str, phases: PhaseSet) -> Node {
    Node {
        name: name.into(),
        phases,
    }
}

pub fn bases() -> Bases {
    Bases { kva: 100.0, kv: 2.4 }
}

/// Source, a trunk node and two laterals, all on phase a.
pub fn four_node() -> Feeder {
    let a = PhaseSet::single(Phase::A);
    let zero = [c(0.0, 0.0); 3];
    let load = |p, q| [c(p, q), c(0.0, 0.0), c(0.0, 0.0)];
    Feeder::new(
        vec![node("n1", a), node("n2", a), node("n3", a), node("n4", a)],
        vec![
            Line::diagonal(0, 1, a, c(0.01, 0.02)),
            Line::diagonal(1, 2, a, c(0.02, 0.02)),
            Line::diagonal(1, 3, a, c(0.03, 0.02)),
        ],
        vec![zero, load(0.05, 0.02), load(0.08, 0.03), load(0.06, 0.02)],
        0,
        1.0,
        VoltageLimits::default(),
        bases(),
    )
    .unwrap()
}

/// Two-node single-phase feeder with one line of impedance `z` and load `s`.
pub fn two_node(z: Complex64, s: Complex64) -> Feeder {
    let a = PhaseSet::single(Phase::A);
    Feeder::new(
        vec![node("src", a), node("load", a)],
        vec![Line::diagonal(0, 1, a, z)],
        vec![[c(0.0, 0.0); 3], [s, c(0.0, 0.0), c(0.0, 0.0)]],
        0,
        1.0,
        VoltageLimits::default(),
        bases(),
    )
    .unwrap()
}

/// Three-phase feeder: source, trunk, a two-phase lateral and a single-phase
/// leaf, with mutual coupling on the trunk.
pub fn three_phase(load_scale: f64) -> Feeder {
    let abc = PhaseSet::ABC;
    let ab = PhaseSet::from_phases(&[Phase::A, Phase::B]);
    let cph = PhaseSet::single(Phase::C);
    let mut trunk = [[c(0.0, 0.0); 3]; 3];
    for (i, row) in trunk.iter_mut().enumerate() {
        for (j, z) in row.iter_mut().enumerate() {
            *z = if i == j { c(0.01, 0.02) } else { c(0.003, 0.006) };
        }
    }
    let lines = vec![
        Line {
            from: 0,
            to: 1,
            phases: abc,
            impedance: trunk,
        },
        Line::diagonal(1, 2, ab, c(0.02, 0.015)),
        Line::diagonal(1, 3, cph, c(0.025, 0.02)),
        Line::diagonal(2, 4, ab, c(0.015, 0.01)),
    ];
    let s = |a: f64, b: f64, cc: f64| {
        [
            c(a * load_scale, 0.4 * a * load_scale),
            c(b * load_scale, 0.4 * b * load_scale),
            c(cc * load_scale, 0.4 * cc * load_scale),
        ]
    };
    Feeder::new(
        vec![
            node("s", abc),
            node("t", abc),
            node("l", ab),
            node("c", cph),
            node("e", ab),
        ],
        lines,
        vec![s(0.0, 0.0, 0.0), s(0.02, 0.02, 0.02), s(0.03, 0.01, 0.0), s(0.0, 0.0, 0.04), s(0.01, 0.02, 0.0)],
        0,
        1.0,
        VoltageLimits::default(),
        bases(),
    )
    .unwrap()
}

pub fn battery(id: &str, node: &str, phase: Phase) -> BatterySpec {
    BatterySpec::standard(id, node, phase)
}

pub fn market(capacity_kw: f64) -> MarketParams {
    MarketParams::with_capacity(capacity_kw, capacity_kw.max(1.0) * 2.0)
}
