//! Tanh-squashed Gaussian policy.
//!
//! The network outputs a mean and a log-variance per action dimension. Samples
//! are `a = tanh(mu + sigma * z)` with `z ~ N(0, 1)`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{Mlp, Tape};
use super::LearnError;
use crate::math;

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 2.0;

/// Largest magnitude an emitted action may have.
pub const ACTION_BOUND: f64 = 1.0 - 1e-9;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// `ln(1 - tanh(u)^2)`, stable for large `|u|`.
pub(crate) fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u.abs();
    2.0 * (core::f64::consts::LN_2 - u.abs() - math::ln(1.0 + math::exp(x)))
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianPolicy {
    pub net: Mlp,
    action_dim: usize,
}

/// One batch of reparameterized samples with what the gradient pass needs.
#[derive(Clone, Debug)]
pub struct PolicySample {
    pub tape: Tape,
    pub actions: Vec<f64>,
    pub log_prob: Vec<f64>,
    /// Standard normal draws.
    pub noise: Vec<f64>,
    /// Standard deviations after clamping.
    pub std: Vec<f64>,
    /// Whether each log-variance sat inside its clamp (gradient passes).
    pub unclamped: Vec<bool>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], action_dim: usize, rng: &mut R) -> Result<Self, LearnError> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        Ok(GaussianPolicy {
            net: Mlp::new(&sizes, rng)?,
            action_dim,
        })
    }

    pub fn from_net(net: Mlp) -> Result<Self, LearnError> {
        if net.output_len() % 2 != 0 {
            return Err(LearnError::Shape("policy output must hold a mean and log-variance per action".into()));
        }
        let action_dim = net.output_len() / 2;
        Ok(GaussianPolicy { net, action_dim })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_len()
    }

    /// `tanh(mean)` for one observation.
    pub fn deterministic(&self, obs: &[f64]) -> Result<Vec<f64>, LearnError> {
        let out = self.net.forward(obs)?;
        Ok(out[..self.action_dim]
            .iter()
            .map(|&m| math::tanh(m).clamp(-ACTION_BOUND, ACTION_BOUND))
            .collect())
    }

    /// Mean and standard deviation (before squashing) for one observation.
    pub fn distribution(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), LearnError> {
        let out = self.net.forward(obs)?;
        let mean = out[..self.action_dim].to_vec();
        let std = out[self.action_dim..]
            .iter()
            .map(|&lv| math::exp(0.5 * lv.clamp(LOG_VAR_MIN, LOG_VAR_MAX)))
            .collect();
        Ok((mean, std))
    }

    /// Stochastic action and its log-probability for one observation.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64), LearnError> {
        let s = self.sample_batch(obs, 1, rng)?;
        Ok((s.actions, s.log_prob[0]))
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, obs: &[f64], batch: usize, rng: &mut R) -> Result<PolicySample, LearnError> {
        let tape = self.net.forward_batch(obs, batch)?;
        let k = self.action_dim;
        let n = batch * k;
        let mut actions = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        let mut std = Vec::with_capacity(n);
        let mut unclamped = Vec::with_capacity(n);
        let mut log_prob = Vec::with_capacity(batch);
        for row in tape.output().chunks_exact(2 * k) {
            let mut lp = 0.0;
            for d in 0..k {
                let mu = row[d];
                let lv = row[k + d];
                let lvc = lv.clamp(LOG_VAR_MIN, LOG_VAR_MAX);
                let sigma = math::exp(0.5 * lvc);
                let z: f64 = rng.sample(StandardNormal);
                let u = mu + sigma * z;
                let a = math::tanh(u).clamp(-ACTION_BOUND, ACTION_BOUND);
                lp += -0.5 * z * z - 0.5 * lvc - HALF_LN_2PI - log_one_minus_tanh_sq(u);
                actions.push(a);
                noise.push(z);
                std.push(sigma);
                unclamped.push(lv == lvc);
            }
            log_prob.push(lp);
        }
        Ok(PolicySample {
            tape,
            actions,
            log_prob,
            noise,
            std,
            unclamped,
        })
    }

    /// Backpropagates `dL/da` and `dL/dlogp` through a batch of samples into
    /// the network's parameter gradient.
    pub fn backward(
        &self,
        sample: &PolicySample,
        d_action: &[f64],
        d_log_prob: &[f64],
        grad: &mut [f64],
    ) -> Result<(), LearnError> {
        let k = self.action_dim;
        let batch = sample.tape.batch();
        if d_action.len() != batch * k || d_log_prob.len() != batch {
            return Err(LearnError::Shape("policy gradient buffers do not match the batch".into()));
        }
        let mut d_out = alloc::vec![0.0; batch * 2 * k];
        for b in 0..batch {
            let out = &mut d_out[b * 2 * k..(b + 1) * 2 * k];
            let dlp = d_log_prob[b];
            for d in 0..k {
                let i = b * k + d;
                let u = sample.tape.output()[b * 2 * k + d] + sample.std[i] * sample.noise[i];
                let t = math::tanh(u);
                let dadu = 1.0 - t * t;
                // d logp / du = 2 tanh(u); d logp / dlogvar (explicit) = -1/2
                let du = d_action[i] * dadu + dlp * 2.0 * t;
                out[d] = du;
                if sample.unclamped[i] {
                    // u depends on logvar through sigma = exp(logvar / 2)
                    out[k + d] = du * 0.5 * sample.std[i] * sample.noise[i] - 0.5 * dlp;
                }
            }
        }
        self.net.backward(&sample.tape, &d_out, grad)?;
        Ok(())
    }

    /// Copy with every parameter perturbed by `N(0, scale^2)`.
    pub fn perturbed<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> GaussianPolicy {
        let mut p = self.clone();
        if scale > 0.0 {
            for w in p.net.params_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *w += scale * z;
            }
        }
        p
    }
}
