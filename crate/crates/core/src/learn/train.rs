//! Episode loop: rollouts, replay, periodic deterministic evaluation.

use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::buffer::ReplayBuffer;
use super::csac::{CsacAgent, CsacConfig, LossReport};
use super::LearnError;
use crate::env::{Env, Transition};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub agent: CsacConfig,
    pub episodes: usize,
    pub seed: u64,
    /// Environment steps taken with uniform random actions before learning.
    pub warmup_steps: usize,
    /// Gradient steps per environment step once learning starts.
    pub updates_per_step: usize,
    pub buffer_capacity: usize,
    /// Multiplier applied to environment rewards before they enter replay.
    pub reward_scale: f64,
    /// Standard deviation of per-episode policy parameter noise; 0 disables it.
    pub param_noise: f64,
    /// Evaluate every this many episodes (and after the last one).
    pub eval_every: usize,
    /// Scenario offsets of the evaluation episodes.
    pub eval_offsets: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            agent: CsacConfig::default(),
            episodes: 100,
            seed: 0,
            warmup_steps: 1000,
            updates_per_step: 1,
            buffer_capacity: 100_000,
            reward_scale: 0.1,
            param_noise: 0.05,
            eval_every: 10,
            eval_offsets: alloc::vec![0],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        self.agent.validate()?;
        if self.updates_per_step == 0 {
            return Err(LearnError::Config("updates per step must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(LearnError::Config("evaluation interval must be positive".into()));
        }
        if self.eval_offsets.is_empty() {
            return Err(LearnError::Config("at least one evaluation episode is needed".into()));
        }
        if !(self.param_noise >= 0.0 && self.reward_scale.is_finite()) {
            return Err(LearnError::Config("noise and reward scale must be finite and noise non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    /// Mean environment reward per step, dollars.
    pub reward: f64,
    /// Mean violations per step.
    pub cost: f64,
    pub lambda: f64,
    pub q_loss: f64,
    pub v_loss: f64,
    pub policy_loss: f64,
    /// Latest evaluation: mean profit per evaluation episode, dollars.
    pub eval_profit: f64,
    /// Latest evaluation: mean violations per step.
    pub eval_violations: f64,
    /// Whether this episode ran an evaluation.
    pub evaluated: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub steps: usize,
    /// Mean profit per episode, dollars.
    pub profit: f64,
    /// Mean violations per step.
    pub violations: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainArtifact {
    /// Parameters after the last episode.
    pub agent: CsacAgent,
    pub metrics: Vec<EpisodeMetrics>,
    pub steps: usize,
    /// Evaluated parameters with the highest evaluation profit, and the
    /// episode they were evaluated after.
    pub best: Option<(usize, CsacAgent)>,
}

impl TrainArtifact {
    /// First evaluated episode whose evaluation profit reaches `threshold`.
    pub fn episodes_to_reach(&self, threshold: f64) -> Option<usize> {
        self.metrics
            .iter()
            .find(|m| m.evaluated && m.eval_profit >= threshold)
            .map(|m| m.episode)
    }
}

/// Deterministic rollouts of `policy` from each offset.
pub fn evaluate<F>(env: &mut Env, offsets: &[usize], mut policy: F) -> Result<EvalReport, LearnError>
where
    F: FnMut(&Env, &[f64]) -> Result<Vec<f64>, LearnError>,
{
    if offsets.is_empty() {
        return Err(LearnError::Config("no evaluation episodes".into()));
    }
    let mut report = EvalReport::default();
    let mut profit = 0.0;
    let mut violations = 0.0;
    for &off in offsets {
        let mut obs = env.reset_at(off)?.observation;
        while !env.is_done() {
            let a = policy(env, &obs)?;
            let out = env.step(&a)?;
            profit += out.reward;
            violations += out.cost;
            report.steps += 1;
            obs = out.state.observation;
        }
        report.episodes += 1;
    }
    report.profit = profit / report.episodes as f64;
    report.violations = violations / report.steps.max(1) as f64;
    Ok(report)
}

pub fn evaluate_agent(agent: &CsacAgent, env: &mut Env, offsets: &[usize]) -> Result<EvalReport, LearnError> {
    evaluate(env, offsets, |_, obs| agent.act_deterministic(obs))
}

/// Trains an agent on `env`, evaluating on `eval_env`. With demonstrations the
/// replay buffer runs in imitation mode.
pub fn train_run(
    config: &TrainConfig,
    env: &mut Env,
    eval_env: &mut Env,
    demos: Option<Vec<Transition>>,
) -> Result<TrainArtifact, LearnError> {
    config.validate()?;
    let obs_dim = env.observation_len();
    let act_dim = env.action_len();
    if eval_env.observation_len() != obs_dim || eval_env.action_len() != act_dim {
        return Err(LearnError::Shape("training and evaluation environments differ in shape".into()));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut agent = CsacAgent::new(config.agent.clone(), obs_dim, act_dim, &mut init_rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut episode_seeds = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    let mut buffer = match demos {
        Some(d) => {
            if let Some(t) = d.iter().find(|t| t.state.len() != obs_dim || t.action.len() != act_dim) {
                return Err(LearnError::Shape(alloc::format!(
                    "demonstration of shape ({}, {}) for an environment of shape ({obs_dim}, {act_dim})",
                    t.state.len(),
                    t.action.len()
                )));
            }
            ReplayBuffer::with_demonstrations(config.buffer_capacity, d)
        }
        None => ReplayBuffer::new(config.buffer_capacity),
    };

    let mut metrics = Vec::with_capacity(config.episodes);
    let mut steps = 0usize;
    let mut last_eval = EvalReport::default();
    let mut best: Option<(usize, f64, CsacAgent)> = None;
    let batch_size = config.agent.batch_size;

    for episode in 0..config.episodes {
        let seed = episode_seeds.next_u64();
        let mut obs = env.reset(seed)?.observation;
        let rollout = agent.policy.perturbed(config.param_noise, &mut rng);
        let mut reward_sum = 0.0;
        let mut cost_sum = 0.0;
        let mut ep_steps = 0usize;
        let mut losses = Vec::new();
        while !env.is_done() {
            let action = if steps < config.warmup_steps {
                (0..act_dim).map(|_| rng.random_range(-1.0..1.0)).collect()
            } else {
                rollout.sample(&obs, &mut rng)?.0
            };
            let out = env.step(&action)?;
            reward_sum += out.reward;
            cost_sum += out.cost;
            buffer.push(Transition {
                state: obs,
                action,
                reward: out.reward * config.reward_scale,
                cost: out.cost,
                next_state: out.state.observation.clone(),
                done: out.done,
                demo: false,
            });
            obs = out.state.observation;
            steps += 1;
            ep_steps += 1;

            if steps >= config.warmup_steps && buffer.len() >= batch_size {
                for _ in 0..config.updates_per_step {
                    let batch = buffer.sample(batch_size, &mut rng)?;
                    losses.push(agent.train_step(&batch, &mut rng)?);
                }
            }
        }

        let evaluated = (episode + 1) % config.eval_every == 0 || episode + 1 == config.episodes;
        if evaluated {
            last_eval = evaluate_agent(&agent, eval_env, &config.eval_offsets)?;
            if best.as_ref().is_none_or(|b| last_eval.profit > b.1) {
                best = Some((episode, last_eval.profit, agent.clone()));
            }
        }
        let avg = |f: fn(&LossReport) -> f64| {
            if losses.is_empty() {
                0.0
            } else {
                losses.iter().map(f).sum::<f64>() / losses.len() as f64
            }
        };
        let row = EpisodeMetrics {
            episode,
            reward: reward_sum / ep_steps.max(1) as f64,
            cost: cost_sum / ep_steps.max(1) as f64,
            lambda: agent.lambda,
            q_loss: avg(|l| 0.5 * (l.q1_loss + l.q2_loss)),
            v_loss: avg(|l| l.v_loss),
            policy_loss: avg(|l| l.policy_loss),
            eval_profit: last_eval.profit,
            eval_violations: last_eval.violations,
            evaluated,
        };
        log::debug!(
            "episode {episode}: reward {:.5} cost {:.3} lambda {:.3} eval {:.4}",
            row.reward,
            row.cost,
            row.lambda,
            row.eval_profit
        );
        metrics.push(row);
    }

    Ok(TrainArtifact {
        agent,
        metrics,
        steps,
        best: best.map(|(e, _, a)| (e, a)),
    })
}
