//! Soft actor-critic with a Lagrange multiplier on the discounted violation cost.
//!
//! Twin Q networks regress onto `r - lambda c + gamma V_target(s')`, the value
//! network onto `min Q(s, a~) - alpha log pi(a~|s)`, and the policy minimizes
//! `alpha log pi(a~|s) - min Q(s, a~)`. The multiplier follows projected
//! ascent on the gap between the batch's discounted cost and its limit.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::adam::Adam;
use super::buffer::Batch;
use super::mlp::Mlp;
use super::policy::GaussianPolicy;
use super::LearnError;
use crate::math;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CsacConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub lambda_lr: f64,
    pub tau: f64,
    pub alpha: f64,
    /// Tune `alpha` towards `target_entropy` (default `-action_dim`).
    pub auto_alpha: bool,
    pub alpha_lr: f64,
    pub target_entropy: Option<f64>,
    pub batch_size: usize,
    /// Allowed violations per step.
    pub cost_limit: f64,
    /// Episode length used to turn per-step costs into discounted totals.
    pub horizon: usize,
    pub initial_lambda: f64,
}

impl Default for CsacConfig {
    fn default() -> Self {
        CsacConfig {
            hidden: vec![64, 32],
            gamma: 0.99,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            lambda_lr: 0.005,
            tau: 0.005,
            alpha: 0.1,
            auto_alpha: false,
            alpha_lr: 3e-4,
            target_entropy: None,
            batch_size: 256,
            cost_limit: 0.0,
            horizon: crate::env::DEFAULT_EPISODE_STEPS,
            initial_lambda: 0.0,
        }
    }
}

impl CsacConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |s: &str| Err(LearnError::Config(s.into()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("discount must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("soft-target rate must lie in (0, 1]");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.lambda_lr >= 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.alpha >= 0.0) {
            return bad("entropy temperature must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        if !(self.cost_limit >= 0.0) {
            return bad("cost limit must be non-negative");
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if !(self.initial_lambda >= 0.0) {
            return bad("initial multiplier must be non-negative");
        }
        Ok(())
    }

    /// `(1 - gamma^T) / (1 - gamma)`, the discounted weight of a constant per-step cost.
    pub fn discount_mass(&self) -> f64 {
        (1.0 - math::powi(self.gamma, self.horizon as i32)) / (1.0 - self.gamma)
    }

    /// Limit on the discounted cost value.
    pub fn value_limit(&self) -> f64 {
        self.discount_mass() * self.cost_limit
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub v_loss: f64,
    pub policy_loss: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CsacAgent {
    pub config: CsacConfig,
    pub policy: GaussianPolicy,
    pub q1: Mlp,
    pub q2: Mlp,
    pub value: Mlp,
    pub value_target: Mlp,
    pub lambda: f64,
    pub alpha: f64,
    pub updates: u64,
    policy_opt: Adam,
    q1_opt: Adam,
    q2_opt: Adam,
    value_opt: Adam,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Row-wise concatenation of two row-major matrices.
fn concat_rows(a: &[f64], a_w: usize, b: &[f64], b_w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    for (ra, rb) in a.chunks_exact(a_w).zip(b.chunks_exact(b_w)) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    out
}

impl CsacAgent {
    pub fn new<R: Rng + ?Sized>(
        config: CsacConfig,
        obs_dim: usize,
        action_dim: usize,
        rng: &mut R,
    ) -> Result<Self, LearnError> {
        config.validate()?;
        let policy = GaussianPolicy::new(obs_dim, &config.hidden, action_dim, rng)?;
        let mut critic_sizes = vec![obs_dim + action_dim];
        critic_sizes.extend_from_slice(&config.hidden);
        critic_sizes.push(1);
        let q1 = Mlp::new(&critic_sizes, rng)?;
        let q2 = Mlp::new(&critic_sizes, rng)?;
        let mut value_sizes = vec![obs_dim];
        value_sizes.extend_from_slice(&config.hidden);
        value_sizes.push(1);
        let value = Mlp::new(&value_sizes, rng)?;
        let value_target = value.clone();
        Ok(CsacAgent {
            policy_opt: Adam::new(policy.net.num_params(), config.actor_lr),
            q1_opt: Adam::new(q1.num_params(), config.critic_lr),
            q2_opt: Adam::new(q2.num_params(), config.critic_lr),
            value_opt: Adam::new(value.num_params(), config.critic_lr),
            lambda: config.initial_lambda,
            alpha: config.alpha,
            updates: 0,
            config,
            policy,
            q1,
            q2,
            value,
            value_target,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.action_dim()
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>, LearnError> {
        Ok(self.policy.sample(obs, rng)?.0)
    }

    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>, LearnError> {
        self.policy.deterministic(obs)
    }

    /// Projected multiplier step for a batch of per-step costs.
    pub fn update_lambda(&mut self, costs: &[f64]) -> f64 {
        let discounted = self.config.discount_mass() * mean(costs);
        self.lambda = (self.lambda + self.config.lambda_lr * (discounted - self.config.value_limit())).max(0.0);
        self.lambda
    }

    /// One gradient step on every component from `batch`.
    pub fn train_step<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<LossReport, LearnError> {
        let n = batch.size;
        let (od, ad) = (batch.obs_dim, batch.act_dim);
        if n == 0 || od != self.obs_dim() || ad != self.action_dim() {
            return Err(LearnError::Shape("batch does not match the agent".into()));
        }
        let inv_n = 1.0 / n as f64;
        let gamma = self.config.gamma;

        // critics
        let v_next = self.value_target.forward_batch(&batch.next_obs, n)?;
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let cont = if batch.done[i] { 0.0 } else { 1.0 };
                batch.rewards[i] - self.lambda * batch.costs[i] + gamma * cont * v_next.output()[i]
            })
            .collect();
        let sa = concat_rows(&batch.obs, od, &batch.actions, ad);
        let mut q_losses = [0.0; 2];
        for (k, (net, opt)) in [(&mut self.q1, &mut self.q1_opt), (&mut self.q2, &mut self.q2_opt)]
            .into_iter()
            .enumerate()
        {
            let tape = net.forward_batch(&sa, n)?;
            let diff: Vec<f64> = tape.output().iter().zip(&y).map(|(q, t)| q - t).collect();
            q_losses[k] = 0.5 * mean(&diff.iter().map(|d| d * d).collect::<Vec<_>>());
            let g_out: Vec<f64> = diff.iter().map(|d| d * inv_n).collect();
            let mut grad = vec![0.0; net.num_params()];
            net.backward(&tape, &g_out, &mut grad)?;
            opt.step(net.params_mut(), &grad);
        }

        // fresh actions for the value and policy targets
        let sample = self.policy.sample_batch(&batch.obs, n, rng)?;
        let sa_new = concat_rows(&batch.obs, od, &sample.actions, ad);
        let t1 = self.q1.forward_batch(&sa_new, n)?;
        let t2 = self.q2.forward_batch(&sa_new, n)?;
        let use_first: Vec<bool> = t1.output().iter().zip(t2.output()).map(|(a, b)| a <= b).collect();
        let q_min: Vec<f64> = t1
            .output()
            .iter()
            .zip(t2.output())
            .map(|(a, b)| a.min(*b))
            .collect();

        // value
        let vt = self.value.forward_batch(&batch.obs, n)?;
        let v_diff: Vec<f64> = (0..n)
            .map(|i| vt.output()[i] - (q_min[i] - self.alpha * sample.log_prob[i]))
            .collect();
        let v_loss = 0.5 * mean(&v_diff.iter().map(|d| d * d).collect::<Vec<_>>());
        let g_out: Vec<f64> = v_diff.iter().map(|d| d * inv_n).collect();
        let mut grad = vec![0.0; self.value.num_params()];
        self.value.backward(&vt, &g_out, &mut grad)?;
        self.value_opt.step(self.value.params_mut(), &grad);

        // policy: d/da of -min Q through whichever critic is smaller
        let policy_loss = mean(
            &(0..n)
                .map(|i| self.alpha * sample.log_prob[i] - q_min[i])
                .collect::<Vec<_>>(),
        );
        let mut d_action = vec![0.0; n * ad];
        for (which, tape, net) in [(true, &t1, &self.q1), (false, &t2, &self.q2)] {
            let g_out: Vec<f64> = use_first
                .iter()
                .map(|&f| if f == which { -inv_n } else { 0.0 })
                .collect();
            let mut scratch = vec![0.0; net.num_params()];
            let d_in = net.backward(tape, &g_out, &mut scratch)?;
            for i in 0..n {
                for d in 0..ad {
                    d_action[i * ad + d] += d_in[i * (od + ad) + od + d];
                }
            }
        }
        let d_logp = vec![self.alpha * inv_n; n];
        let mut grad = vec![0.0; self.policy.net.num_params()];
        self.policy.backward(&sample, &d_action, &d_logp, &mut grad)?;
        self.policy_opt.step(self.policy.net.params_mut(), &grad);

        let entropy = -mean(&sample.log_prob);
        if self.config.auto_alpha {
            let target = self
                .config
                .target_entropy
                .unwrap_or(-(self.action_dim() as f64));
            // gradient of -alpha (log pi + target) with respect to log alpha
            let g = -self.alpha * (target - entropy);
            let log_alpha = math::ln(self.alpha.max(1e-12)) - self.config.alpha_lr * g;
            self.alpha = math::exp(log_alpha);
        }

        let lambda = self.update_lambda(&batch.costs);
        self.value_target.soft_update(&self.value, self.config.tau);
        self.updates += 1;

        Ok(LossReport {
            q1_loss: q_losses[0],
            q2_loss: q_losses[1],
            v_loss,
            policy_loss,
            lambda,
            alpha: self.alpha,
            entropy,
        })
    }
}
