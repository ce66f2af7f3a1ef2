//! Replay memory with a fixed demonstration pool and a ring of agent experience.
//!
//! In imitation mode agent transitions are stored with reward 0 and batches are
//! drawn half from each pool; demonstrations always carry reward +1.

use alloc::vec::Vec;

use rand::Rng;

use super::LearnError;
use crate::env::Transition;

/// Column-major view of a sampled batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: Vec<bool>,
    pub demo: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Result<Batch, LearnError> {
        let first = items
            .first()
            .ok_or_else(|| LearnError::Buffer("cannot build an empty batch".into()))?;
        let (od, ad) = (first.state.len(), first.action.len());
        let mut b = Batch {
            size: items.len(),
            obs_dim: od,
            act_dim: ad,
            ..Batch::default()
        };
        for t in items {
            if t.state.len() != od || t.next_state.len() != od || t.action.len() != ad {
                return Err(LearnError::Shape("transitions of mixed shape in one batch".into()));
            }
            b.obs.extend_from_slice(&t.state);
            b.actions.extend_from_slice(&t.action);
            b.rewards.push(t.reward);
            b.costs.push(t.cost);
            b.next_obs.extend_from_slice(&t.next_state);
            b.done.push(t.done);
            b.demo.push(t.demo);
        }
        Ok(b)
    }
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    demo: Vec<Transition>,
    agent: Vec<Transition>,
    capacity: usize,
    next: usize,
    sqil: bool,
    warned: bool,
}

impl ReplayBuffer {
    /// Plain buffer: only agent experience, stored with its own reward.
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            demo: Vec::new(),
            agent: Vec::new(),
            capacity: capacity.max(1),
            next: 0,
            sqil: false,
            warned: false,
        }
    }

    /// Imitation buffer seeded with demonstrations, stored with reward +1.
    pub fn with_demonstrations(capacity: usize, demos: Vec<Transition>) -> Self {
        let demo = demos
            .into_iter()
            .map(|mut t| {
                t.reward = 1.0;
                t.demo = true;
                t
            })
            .collect();
        ReplayBuffer {
            demo,
            sqil: true,
            ..ReplayBuffer::new(capacity)
        }
    }

    pub fn is_imitation(&self) -> bool {
        self.sqil
    }

    pub fn demo_len(&self) -> usize {
        self.demo.len()
    }

    pub fn agent_len(&self) -> usize {
        self.agent.len()
    }

    pub fn len(&self) -> usize {
        self.demo.len() + self.agent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn demos(&self) -> &[Transition] {
        &self.demo
    }

    pub fn push(&mut self, mut t: Transition) {
        t.demo = false;
        if self.sqil {
            t.reward = 0.0;
        }
        if self.agent.len() < self.capacity {
            self.agent.push(t);
        } else {
            self.agent[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform batch; in imitation mode exactly half comes from each pool.
    pub fn sample<R: Rng + ?Sized>(&mut self, batch: usize, rng: &mut R) -> Result<Batch, LearnError> {
        if batch == 0 {
            return Err(LearnError::Buffer("batch size must be positive".into()));
        }
        if self.is_empty() {
            return Err(LearnError::Buffer("both pools are empty".into()));
        }
        let mut picked: Vec<&Transition> = Vec::with_capacity(batch);
        if !self.sqil {
            for _ in 0..batch {
                picked.push(&self.agent[rng.random_range(0..self.agent.len())]);
            }
            return Batch::from_transitions(&picked);
        }
        if batch % 2 != 0 {
            return Err(LearnError::Buffer("imitation batches must have even size".into()));
        }
        let (demo_n, agent_n) = match (self.demo.is_empty(), self.agent.is_empty()) {
            (false, false) => (batch / 2, batch / 2),
            (false, true) => (batch, 0),
            (true, false) => (0, batch),
            (true, true) => unreachable!("checked above"),
        };
        if (demo_n == 0 || agent_n == 0) && !self.warned {
            log::warn!(
                "imitation buffer has an empty {} pool; sampling only from the other",
                if demo_n == 0 { "demonstration" } else { "agent" }
            );
            self.warned = true;
        }
        for _ in 0..demo_n {
            picked.push(&self.demo[rng.random_range(0..self.demo.len())]);
        }
        for _ in 0..agent_n {
            picked.push(&self.agent[rng.random_range(0..self.agent.len())]);
        }
        Batch::from_transitions(&picked)
    }
}
