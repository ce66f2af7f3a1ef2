//! Environments, demonstrations and evaluations built from a [`RunConfig`].

use std::time::Instant;

use anyhow::{Context, Result};
use griddispatch_core::env::{Env, EnvConfig, Transition};
use griddispatch_core::expert::{expert_action, generate_demonstrations};
use griddispatch_core::grid::Feeder;
use griddispatch_core::learn::{CsacAgent, EvalReport};
use griddispatch_core::market::{synthesize_scenario, RegulationScenario};

use crate::config::RunConfig;
use crate::feeder_io::{feeder13, load_feeder};
use crate::scenario_io::load_scenario;

pub struct Experiment {
    pub config: RunConfig,
    pub env_config: EnvConfig,
    pub train_scenario: RegulationScenario,
    pub eval_scenario: RegulationScenario,
}

/// One step of an evaluation rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub episode: usize,
    pub t: usize,
    pub reward: f64,
    pub cost: f64,
    pub p_target_kw: f64,
    pub p_response_kw: f64,
    pub min_v: f64,
    pub max_v: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    pub report: EvalReport,
    pub trace: Vec<TraceRow>,
    /// Mean wall-time of one policy decision (network pass or MILP solve).
    pub mean_decision_seconds: f64,
    /// Expert steps with no feasible schedule (the fleet idled).
    pub infeasible_steps: usize,
}

pub fn feeder_for(config: &RunConfig) -> Result<Feeder> {
    match &config.grid.feeder {
        Some(p) => load_feeder(p),
        None => Ok(feeder13()),
    }
}

fn scenario(path: &Option<std::path::PathBuf>, seed: u64, config: &RunConfig) -> Result<RegulationScenario> {
    match path {
        Some(p) => load_scenario(p, config.scenario.step_seconds),
        None => Ok(synthesize_scenario(seed, config.scenario.steps, config.scenario.step_seconds)?),
    }
}

impl Experiment {
    pub fn new(config: &RunConfig) -> Result<Experiment> {
        let feeder = feeder_for(config)?;
        let mut env_config = EnvConfig::new(feeder, config.fleet_specs(), config.market_params());
        env_config.episode_steps = config.env.episode_steps;
        env_config.placement().context("fleet placement")?;
        Ok(Experiment {
            config: config.clone(),
            env_config,
            train_scenario: scenario(&config.scenario.train, config.scenario.train_seed, config)
                .context("training scenario")?,
            eval_scenario: scenario(&config.scenario.eval, config.scenario.eval_seed, config)
                .context("evaluation scenario")?,
        })
    }

    pub fn train_env(&self) -> Result<Env> {
        Ok(Env::new(self.env_config.clone(), self.train_scenario.clone())?)
    }

    pub fn eval_env(&self) -> Result<Env> {
        Ok(Env::new(self.env_config.clone(), self.eval_scenario.clone())?)
    }

    /// Windows scored during training and used to pick the best checkpoint.
    pub fn validation_offsets(&self) -> Vec<usize> {
        self.offsets(0)
    }

    /// Windows for final evaluation, disjoint from the validation windows.
    pub fn test_offsets(&self) -> Vec<usize> {
        self.offsets(1)
    }

    fn offsets(&self, half: usize) -> Vec<usize> {
        let n = self.config.scenario.eval_episodes.max(1);
        let steps = self.env_config.episode_steps;
        let span = self.eval_scenario.len().saturating_sub(steps);
        (0..n).map(|k| (2 * k + half) * span / (2 * n)).collect()
    }

    /// Expert demonstrations from `episodes` random training windows.
    pub fn demonstrations(&self, episodes: usize, seed: u64) -> Result<Vec<Transition>> {
        let mut env = self.train_env()?;
        let seeds: Vec<u64> = (0..episodes as u64)
            .map(|k| seed.wrapping_mul(7919).wrapping_add(k))
            .collect();
        let (demos, report) = generate_demonstrations(&mut env, &seeds)?;
        log::info!(
            "{} demonstrations from {} steps ({} infeasible), profit {:.4}",
            demos.len(),
            report.steps,
            report.skipped,
            report.profit
        );
        Ok(demos)
    }
}

/// Deterministic rollouts from each offset, recording every step. Scores
/// match `griddispatch_core::learn::evaluate`.
fn rollouts<F>(env: &mut Env, offsets: &[usize], mut decide: F) -> Result<(EvalReport, Vec<TraceRow>)>
where
    F: FnMut(&Env, &[f64]) -> Result<Vec<f64>>,
{
    anyhow::ensure!(!offsets.is_empty(), "no evaluation episodes");
    let mut report = EvalReport::default();
    let mut trace = Vec::new();
    let mut profit = 0.0;
    let mut violations = 0.0;
    for (episode, &off) in offsets.iter().enumerate() {
        let mut obs = env.reset_at(off)?.observation;
        while !env.is_done() {
            let t = env.t();
            let a = decide(env, &obs)?;
            let out = env.step(&a)?;
            profit += out.reward;
            violations += out.cost;
            report.steps += 1;
            trace.push(TraceRow {
                episode,
                t,
                reward: out.reward,
                cost: out.cost,
                p_target_kw: out.info.p_target_kw,
                p_response_kw: out.info.p_response_kw,
                min_v: out.info.min_v,
                max_v: out.info.max_v,
            });
            obs = out.state.observation;
        }
        report.episodes += 1;
    }
    report.profit = profit / report.episodes as f64;
    report.violations = violations / report.steps.max(1) as f64;
    Ok((report, trace))
}

pub fn evaluate_policy(agent: &CsacAgent, env: &mut Env, offsets: &[usize]) -> Result<Evaluation> {
    let mut seconds = 0.0;
    let mut decisions = 0usize;
    let (report, trace) = rollouts(env, offsets, |_, obs| {
        let started = Instant::now();
        let a = agent.act_deterministic(obs)?;
        seconds += started.elapsed().as_secs_f64();
        decisions += 1;
        Ok(a)
    })?;
    Ok(Evaluation {
        report,
        trace,
        mean_decision_seconds: seconds / decisions.max(1) as f64,
        infeasible_steps: 0,
    })
}

/// Receding-horizon expert; steps without a feasible schedule idle the fleet.
pub fn evaluate_expert(env: &mut Env, offsets: &[usize]) -> Result<Evaluation> {
    let mut seconds = 0.0;
    let mut decisions = 0usize;
    let mut infeasible = 0usize;
    let (report, trace) = rollouts(env, offsets, |env, _| {
        let started = Instant::now();
        let out = expert_action(env)?;
        seconds += started.elapsed().as_secs_f64();
        decisions += 1;
        Ok(match out {
            Some((a, _)) => a,
            None => {
                infeasible += 1;
                vec![0.0; env.action_len()]
            }
        })
    })?;
    Ok(Evaluation {
        report,
        trace,
        mean_decision_seconds: seconds / decisions.max(1) as f64,
        infeasible_steps: infeasible,
    })
}
