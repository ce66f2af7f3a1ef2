//! The bundled desk-scale benchmark: thirteen-node feeder, five ±10 kW / 4.21 kWh
//! batteries, synthesized scenarios and 48-step episodes.

use griddispatch_core::bess::BatterySpec;
use griddispatch_core::grid::Phase;

use crate::config::{Mode, RunConfig};

pub const EPISODE_STEPS: usize = 48;
/// Episode budgets; plain CSAC gets the longer one so a run that never reaches
/// the profit threshold is censored well past the imitation budget.
pub const SQIL_EPISODES: usize = 1000;
pub const CSAC_EPISODES: usize = 2000;
pub const DEMO_EPISODES: usize = 100;
/// Parameter noise for both learners; the smaller of the two tabulated values.
pub const PARAM_NOISE: f64 = 0.02;

/// Battery placements, strongest connection first.
const PLACEMENTS: [(&str, Phase); 10] = [
    ("632", Phase::A),
    ("671", Phase::B),
    ("675", Phase::C),
    ("611", Phase::C),
    ("652", Phase::A),
    ("633", Phase::B),
    ("634", Phase::C),
    ("680", Phase::A),
    ("692", Phase::B),
    ("646", Phase::C),
];

pub fn fleet(count: usize) -> Vec<BatterySpec> {
    (0..count)
        .map(|i| {
            let (node, phase) = PLACEMENTS[i % PLACEMENTS.len()];
            BatterySpec {
                priority: 1.0 - 0.1 * (i % 10) as f64,
                ..BatterySpec::standard(format!("b{}", i + 1), node, phase)
            }
        })
        .collect()
}

/// Desk-scale benchmark configuration for `mode` and `seed`.
pub fn config(mode: Mode, seed: u64) -> RunConfig {
    let mut c = RunConfig::default();
    c.run.mode = mode;
    c.run.seed = seed;
    c.run.output_dir = format!("runs/{mode}-{seed}").into();
    c.env.episode_steps = EPISODE_STEPS;
    c.agent.batch_size = 64;
    c.train.episodes = if mode == Mode::CsacSqil { SQIL_EPISODES } else { CSAC_EPISODES };
    c.train.warmup_steps = 500;
    c.train.reward_scale = 40.0;
    c.train.param_noise = PARAM_NOISE;
    c.train.eval_every = 5;
    c.train.demo_episodes = DEMO_EPISODES;
    c
}
