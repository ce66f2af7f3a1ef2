//! Constrained MDP over a battery fleet on a feeder tracking a regulation signal.
//!
//! Actions are per-battery values in `[-1, 1]`, mapped affinely onto the
//! battery's feasible power range (`+1` is the strongest charge). The reward is
//! the regulation payment minus aging cost in dollars; the cost is the number
//! of voltage-limit violations after the step.
//!
//! Observation layout, all entries roughly in `[-1, 1]`:
//!
//! 1. per battery, SoC scaled from `[soc_min, soc_max]` onto `[-1, 1]`;
//! 2. the current target power over the fleet power rating;
//! 3. per non-source node in feeder order: net active injection, net reactive
//!    injection (both over the feeder's largest nodal apparent load) and
//!    `(min |V| - 1) / 0.05` over the node's phases.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bess::{feasible_power_range, BatterySpec, BessError, FleetState};
use crate::grid::{count_violations, solve_linear, Feeder, GridError, InjectionSet, Phase, PowerFlowSolution};
use crate::market::{aging_cost, step_revenue, MarketAccount, MarketError, MarketParams, RegulationScenario};

pub const DEFAULT_EPISODE_STEPS: usize = 450;

/// Voltage deviation that maps to one unit in the observation.
const VOLTAGE_SCALE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Bess(#[from] BessError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("battery {id} is placed on {node} phase {phase}, which the feeder does not have")]
    UnplacedBattery { id: String, node: String, phase: Phase },
    #[error("scenario has {available} steps but an episode needs {needed}")]
    ScenarioTooShort { needed: usize, available: usize },
    #[error("expected {expected} action components, got {got}")]
    ActionLength { expected: usize, got: usize },
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error("invalid environment configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub feeder: Feeder,
    pub fleet: Vec<BatterySpec>,
    pub market: MarketParams,
    pub episode_steps: usize,
    /// Draw the episode's start within the scenario from the reset seed.
    pub random_offset: bool,
}

impl EnvConfig {
    pub fn new(feeder: Feeder, fleet: Vec<BatterySpec>, market: MarketParams) -> Self {
        EnvConfig {
            feeder,
            fleet,
            market,
            episode_steps: DEFAULT_EPISODE_STEPS,
            random_offset: true,
        }
    }

    /// `(node index, phase)` of every battery.
    pub fn placement(&self) -> Result<Vec<(usize, Phase)>, EnvError> {
        self.fleet
            .iter()
            .map(|b| {
                self.feeder
                    .node_index(&b.node)
                    .filter(|&n| self.feeder.nodes()[n].phases.contains(b.phase))
                    .map(|n| (n, b.phase))
                    .ok_or_else(|| EnvError::UnplacedBattery {
                        id: b.id.clone(),
                        node: b.node.clone(),
                        phase: b.phase,
                    })
            })
            .collect()
    }

    pub fn fleet_rating_kw(&self) -> f64 {
        self.fleet.iter().map(|b| b.power_kw).sum()
    }

    pub fn observation_len(&self) -> usize {
        self.fleet.len() + 1 + 3 * (self.feeder.nodes().len() - 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub energy_kwh: Vec<f64>,
    /// Target power for the current step, kW (positive asks for injection).
    pub p_net_kw: f64,
    /// Net injection per node (battery minus load, summed over phases), pu.
    pub p_node: Vec<f64>,
    pub q_node: Vec<f64>,
    /// Lowest phase voltage magnitude per node, pu.
    pub v_node: Vec<f64>,
    pub t: usize,
    pub observation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub p_target_kw: f64,
    /// Fleet response in grid convention (positive is injection), kW.
    pub p_response_kw: f64,
    /// Applied power per battery, charging positive, kW.
    pub applied_kw: Vec<f64>,
    pub performance: f64,
    pub revenue: f64,
    pub aging: f64,
    pub min_v: f64,
    pub max_v: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub cost: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub demo: bool,
}

/// Power for normalized action `a` on the range `(lo, hi)`.
pub fn action_to_power(range: (f64, f64), a: f64) -> f64 {
    let (lo, hi) = range;
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (mid + half * a.clamp(-1.0, 1.0)).clamp(lo, hi)
}

/// Inverse of [`action_to_power`]; zero when the range is a single point.
pub fn power_to_action(range: (f64, f64), p: f64) -> f64 {
    let (lo, hi) = range;
    let half = 0.5 * (hi - lo);
    if half <= 1e-12 {
        return 0.0;
    }
    ((p - 0.5 * (lo + hi)) / half).clamp(-1.0, 1.0)
}

/// `sum_i gamma^i rewards[i]`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

pub struct Env {
    config: EnvConfig,
    scenario: RegulationScenario,
    placement: Vec<(usize, Phase)>,
    fleet_state: FleetState,
    account: MarketAccount,
    offset: usize,
    t: usize,
    applied_kw: Vec<f64>,
    solution: PowerFlowSolution,
    power_norm: f64,
    rng: ChaCha8Rng,
}

impl Env {
    pub fn new(config: EnvConfig, scenario: RegulationScenario) -> Result<Self, EnvError> {
        if config.episode_steps == 0 {
            return Err(EnvError::Invalid("episode length must be positive".into()));
        }
        if config.fleet.is_empty() {
            return Err(EnvError::Invalid("fleet is empty".into()));
        }
        for b in &config.fleet {
            b.validate()?;
        }
        if scenario.len() < config.episode_steps {
            return Err(EnvError::ScenarioTooShort {
                needed: config.episode_steps,
                available: scenario.len(),
            });
        }
        let placement = config.placement()?;
        let account = MarketAccount::new(config.market.clone())?;
        let bases = config.feeder.bases();
        let mut power_norm: f64 = 0.0;
        for (n, load) in config.feeder.loads().iter().enumerate() {
            let load_mag: f64 = load.iter().map(|s| s.norm()).sum();
            let battery: f64 = config
                .fleet
                .iter()
                .zip(&placement)
                .filter(|(_, (node, _))| *node == n)
                .map(|(b, _)| b.power_kw / bases.kva)
                .sum();
            power_norm = power_norm.max(load_mag + battery);
        }
        if !(power_norm > 0.0) {
            power_norm = 1.0;
        }
        let solution = solve_linear(&config.feeder, &InjectionSet::new())?;
        let step_hours = scenario.step_hours();
        let m = config.fleet.len();
        Ok(Env {
            fleet_state: FleetState::initial(&config.fleet, step_hours),
            config,
            scenario,
            placement,
            account,
            offset: 0,
            t: 0,
            applied_kw: vec![0.0; m],
            solution,
            power_norm,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn reset(&mut self, seed: u64) -> Result<EnvState, EnvError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let span = self.scenario.len() - self.config.episode_steps;
        self.offset = if self.config.random_offset && span > 0 {
            self.rng.random_range(0..=span)
        } else {
            0
        };
        self.reset_at(self.offset)
    }

    /// Starts an episode at a fixed scenario offset.
    pub fn reset_at(&mut self, offset: usize) -> Result<EnvState, EnvError> {
        if offset + self.config.episode_steps > self.scenario.len() {
            return Err(EnvError::ScenarioTooShort {
                needed: offset + self.config.episode_steps,
                available: self.scenario.len(),
            });
        }
        self.offset = offset;
        self.t = 0;
        self.fleet_state = FleetState::initial(&self.config.fleet, self.scenario.step_hours());
        self.account.reset();
        self.applied_kw.iter_mut().for_each(|p| *p = 0.0);
        self.solution = solve_linear(&self.config.feeder, &InjectionSet::new())?;
        Ok(self.state())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn scenario(&self) -> &RegulationScenario {
        &self.scenario
    }

    pub fn placement(&self) -> &[(usize, Phase)] {
        &self.placement
    }

    pub fn account(&self) -> &MarketAccount {
        &self.account
    }

    pub fn energies(&self) -> &[f64] {
        &self.fleet_state.energy_kwh
    }

    pub fn step_hours(&self) -> f64 {
        self.scenario.step_hours()
    }

    /// Step within the current episode.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Index into the scenario of the current step.
    pub fn scenario_step(&self) -> usize {
        self.offset + self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.episode_steps
    }

    pub fn current_target_kw(&self) -> f64 {
        if self.is_done() {
            0.0
        } else {
            self.scenario
                .target_kw(self.account.capacity_kw(), self.scenario_step())
        }
    }

    pub fn current_price(&self) -> f64 {
        if self.is_done() {
            0.0
        } else {
            self.scenario.price(self.scenario_step())
        }
    }

    /// Feasible charging range of every battery for the current step.
    pub fn power_ranges(&self) -> Vec<(f64, f64)> {
        let d = self.step_hours();
        let step = self.scenario_step();
        self.config
            .fleet
            .iter()
            .zip(&self.fleet_state.energy_kwh)
            .map(|(b, &e)| feasible_power_range(b, e, d, b.available_at(step)))
            .collect()
    }

    pub fn solution(&self) -> &PowerFlowSolution {
        &self.solution
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        let m = self.config.fleet.len();
        if action.len() != m {
            return Err(EnvError::ActionLength {
                expected: m,
                got: action.len(),
            });
        }
        if self.is_done() {
            return Err(EnvError::EpisodeOver);
        }
        let step = self.scenario_step();
        let instruction = self.scenario.instruction(step);
        let price = self.scenario.price(step);
        let target = self.current_target_kw();

        let applied: Vec<f64> = self
            .power_ranges()
            .into_iter()
            .zip(action)
            .map(|(range, &a)| action_to_power(range, a))
            .collect();
        self.fleet_state.advance(&self.config.fleet, &applied)?;

        let kva = self.config.feeder.bases().kva;
        let mut inj = InjectionSet::new();
        for (&p, &(node, phase)) in applied.iter().zip(&self.placement) {
            if p != 0.0 {
                inj.push(node, phase, -p / kva, 0.0);
            }
        }
        self.solution = solve_linear(&self.config.feeder, &inj)?;
        let limits = self.config.feeder.limits();
        let cost = count_violations(&self.solution, limits.v_min, limits.v_max) as f64;

        let response = -applied.iter().sum::<f64>();
        let performance = self.account.performance_index(instruction, response, price);
        let revenue = step_revenue(&self.account, performance, price, self.scenario.step_seconds());
        let aging = aging_cost(
            &applied,
            self.step_hours(),
            self.account.params.aging_cost_per_kwh,
        );
        self.account.record_performance(performance);
        self.applied_kw = applied.clone();
        self.t += 1;

        let info = StepInfo {
            p_target_kw: target,
            p_response_kw: response,
            applied_kw: applied,
            performance,
            revenue,
            aging,
            min_v: self.solution.min_voltage(),
            max_v: self.solution.max_voltage(),
        };
        Ok(StepOutcome {
            state: self.state(),
            reward: revenue - aging,
            cost,
            done: self.is_done(),
            info,
        })
    }

    /// Snapshot of the current state with its observation vector.
    pub fn state(&self) -> EnvState {
        let feeder = &self.config.feeder;
        let n = feeder.nodes().len();
        let kva = feeder.bases().kva;
        let mut p_node = vec![0.0; n];
        let mut q_node = vec![0.0; n];
        for (j, load) in feeder.loads().iter().enumerate() {
            for s in load {
                p_node[j] -= s.re;
                q_node[j] -= s.im;
            }
        }
        for (&p, &(node, _)) in self.applied_kw.iter().zip(&self.placement) {
            p_node[node] -= p / kva;
        }
        let v_node: Vec<f64> = (0..n)
            .map(|j| {
                feeder.nodes()[j]
                    .phases
                    .iter()
                    .filter_map(|p| self.solution.voltage(j, p))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();

        let mut obs = Vec::with_capacity(self.config.observation_len());
        for (b, &e) in self.config.fleet.iter().zip(&self.fleet_state.energy_kwh) {
            let span = b.e_max() - b.e_min();
            obs.push(2.0 * (e - b.e_min()) / span - 1.0);
        }
        obs.push(self.current_target_kw() / self.config.fleet_rating_kw());
        for j in (0..n).filter(|&j| j != feeder.source()) {
            obs.push(p_node[j] / self.power_norm);
            obs.push(q_node[j] / self.power_norm);
            obs.push((v_node[j] - 1.0) / VOLTAGE_SCALE);
        }

        EnvState {
            energy_kwh: self.fleet_state.energy_kwh.clone(),
            p_net_kw: self.current_target_kw(),
            p_node,
            q_node,
            v_node,
            t: self.t,
            observation: obs,
        }
    }

    /// Expected dimension of every observation.
    pub fn observation_len(&self) -> usize {
        self.config.observation_len()
    }

    pub fn action_len(&self) -> usize {
        self.config.fleet.len()
    }
}
