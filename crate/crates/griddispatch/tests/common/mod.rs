#![allow(dead_code)]

use std::path::Path;

use griddispatch::config::{Mode, RunConfig};

/// A run small enough to train in well under a second.
pub fn tiny(mode: Mode, out: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.run.mode = mode;
    c.run.seed = 7;
    c.run.output_dir = out.to_path_buf();
    c.fleet.count = 2;
    c.env.episode_steps = 12;
    c.scenario.steps = 400;
    c.scenario.eval_episodes = 2;
    c.agent.hidden = vec![16];
    c.agent.batch_size = 16;
    c.train.episodes = 10;
    c.train.warmup_steps = 24;
    c.train.eval_every = 5;
    c.train.demo_episodes = 2;
    c
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
