//! Regulation scenarios, the performance index, payments and aging cost.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Mean-reversion coefficient of synthesized instruction series.
pub const SIGNAL_PERSISTENCE: f64 = 0.95;
/// Innovation scale of synthesized instruction series.
pub const SIGNAL_NOISE: f64 = 0.15;
pub const DEFAULT_STEP_SECONDS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MarketError {
    #[error("scenario {id}: step {t}: instruction {value} outside [-1, 1]")]
    InstructionOutOfRange { id: String, t: usize, value: f64 },
    #[error("scenario {id}: step {t}: price {value} is negative or not finite")]
    InvalidPrice { id: String, t: usize, value: f64 },
    #[error("scenario {0} is empty")]
    Empty(String),
    #[error("invalid market parameter: {0}")]
    InvalidParameter(String),
}

/// Normalized regulation instructions and clearing prices at a fixed cadence.
#[derive(Clone, Debug, PartialEq)]
pub struct RegulationScenario {
    id: String,
    step_seconds: f64,
    instructions: Vec<f64>,
    prices: Vec<f64>,
}

impl RegulationScenario {
    pub fn new(
        id: impl Into<String>,
        step_seconds: f64,
        instructions: Vec<f64>,
        prices: Vec<f64>,
    ) -> Result<Self, MarketError> {
        let id = id.into();
        if instructions.is_empty() {
            return Err(MarketError::Empty(id));
        }
        if instructions.len() != prices.len() {
            return Err(MarketError::InvalidParameter(format!(
                "scenario {id}: {} instructions but {} prices",
                instructions.len(),
                prices.len()
            )));
        }
        if !(step_seconds > 0.0 && step_seconds.is_finite()) {
            return Err(MarketError::InvalidParameter(format!(
                "scenario {id}: step duration must be positive"
            )));
        }
        for (t, &r) in instructions.iter().enumerate() {
            if !(r.abs() <= 1.0) {
                return Err(MarketError::InstructionOutOfRange { id, t, value: r });
            }
        }
        for (t, &p) in prices.iter().enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(MarketError::InvalidPrice { id, t, value: p });
            }
        }
        Ok(RegulationScenario {
            id,
            step_seconds,
            instructions,
            prices,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn step_seconds(&self) -> f64 {
        self.step_seconds
    }

    pub fn step_hours(&self) -> f64 {
        self.step_seconds / 3600.0
    }

    pub fn instruction(&self, t: usize) -> f64 {
        self.instructions[t]
    }

    pub fn price(&self, t: usize) -> f64 {
        self.prices[t]
    }

    pub fn instructions(&self) -> &[f64] {
        &self.instructions
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// Requested fleet power at step `t` for committed capacity `capacity_kw`.
    pub fn target_kw(&self, capacity_kw: f64, t: usize) -> f64 {
        capacity_kw * self.instructions[t]
    }

    /// Contiguous sub-series `[offset, offset + len)`, truncated at the end.
    pub fn window(&self, offset: usize, len: usize) -> RegulationScenario {
        let start = offset.min(self.len() - 1);
        let end = (start + len).min(self.len());
        RegulationScenario {
            id: format!("{}@{}", self.id, start),
            step_seconds: self.step_seconds,
            instructions: self.instructions[start..end].to_vec(),
            prices: self.prices[start..end].to_vec(),
        }
    }
}

/// Mean-reverting instruction series `r_{t+1} = clamp(0.95 r_t + 0.15 n_t, -1, 1)`
/// with a slowly drifting clearing price around 0.5 $/kW.
pub fn synthesize_scenario(
    seed: u64,
    steps: usize,
    step_seconds: f64,
) -> Result<RegulationScenario, MarketError> {
    if steps == 0 {
        return Err(MarketError::InvalidParameter("steps must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r: f64 = 0.0;
    let mut price: f64 = DEFAULT_PRICE;
    let mut instructions = Vec::with_capacity(steps);
    let mut prices = Vec::with_capacity(steps);
    for _ in 0..steps {
        let n: f64 = rng.sample(StandardNormal);
        r = (SIGNAL_PERSISTENCE * r + SIGNAL_NOISE * n).clamp(-1.0, 1.0);
        let m: f64 = rng.sample(StandardNormal);
        price = (DEFAULT_PRICE + 0.98 * (price - DEFAULT_PRICE) + 0.01 * m).clamp(0.05, 2.0);
        instructions.push(r);
        prices.push(price);
    }
    RegulationScenario::new(format!("synth-{seed}"), step_seconds, instructions, prices)
}

/// Default clearing price, $/kW.
pub const DEFAULT_PRICE: f64 = 0.5;

/// Tracking score in `[0, 1]`: `1 - |C r - b| / (C |r|) * price_weight`.
///
/// For a zero instruction the score is 1 if `|b| <= zero_tolerance_kw`, else 0.
pub fn performance_index(
    capacity_kw: f64,
    instruction: f64,
    response_kw: f64,
    price_weight: f64,
    zero_tolerance_kw: f64,
) -> f64 {
    let target = capacity_kw * instruction;
    let scale = capacity_kw * instruction.abs();
    if !(scale > 1e-12) {
        return if response_kw.abs() <= zero_tolerance_kw {
            1.0
        } else {
            0.0
        };
    }
    (1.0 - (target - response_kw).abs() / scale * price_weight).clamp(0.0, 1.0)
}

/// Linear throughput aging proxy: `c_age * sum |p_i| * d`.
pub fn aging_cost(dispatch_kw: &[f64], step_hours: f64, cost_per_kwh: f64) -> f64 {
    cost_per_kwh * dispatch_kw.iter().map(|p| p.abs()).sum::<f64>() * step_hours
}

/// Regulation commitment and the operator's standing in the market.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MarketParams {
    /// Committed regulation capacity `C`, kW.
    pub capacity_kw: f64,
    /// Capacity cap `B`, kW.
    pub capacity_cap_kw: f64,
    pub rho_min: f64,
    /// Dispatch tolerance `eps_M`, kW.
    pub tolerance_kw: f64,
    /// Aging cost per kWh of throughput.
    pub aging_cost_per_kwh: f64,
    /// Performance index assumed before any step has been scored.
    pub initial_performance: f64,
    /// Number of recent steps averaged into the previous-interval index.
    pub performance_window: usize,
}

impl MarketParams {
    /// Defaults for a fleet able to deliver `capacity_cap_kw`.
    pub fn with_capacity(capacity_kw: f64, capacity_cap_kw: f64) -> Self {
        MarketParams {
            capacity_kw,
            capacity_cap_kw,
            rho_min: 0.4,
            tolerance_kw: 0.02 * capacity_kw,
            aging_cost_per_kwh: 0.05,
            initial_performance: 1.0,
            performance_window: 75,
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let bad = |s: &str| Err(MarketError::InvalidParameter(s.into()));
        if !(0.0 <= self.capacity_kw && self.capacity_kw <= self.capacity_cap_kw) {
            return bad("capacity must satisfy 0 <= C <= B");
        }
        if !(0.0..=1.0).contains(&self.rho_min) {
            return bad("rho_min must lie in [0, 1]");
        }
        if !(self.tolerance_kw >= 0.0) {
            return bad("dispatch tolerance must be non-negative");
        }
        if !(self.aging_cost_per_kwh >= 0.0) {
            return bad("aging cost must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.initial_performance) {
            return bad("initial performance must lie in [0, 1]");
        }
        if self.performance_window == 0 {
            return bad("performance window must be positive");
        }
        Ok(())
    }
}

/// Market parameters plus the rolling previous-interval performance index.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketAccount {
    pub params: MarketParams,
    recent: VecDeque<f64>,
}

impl MarketAccount {
    pub fn new(params: MarketParams) -> Result<Self, MarketError> {
        params.validate()?;
        Ok(MarketAccount {
            params,
            recent: VecDeque::new(),
        })
    }

    pub fn capacity_kw(&self) -> f64 {
        self.params.capacity_kw
    }

    /// Mean score over the last `performance_window` steps.
    pub fn previous_performance(&self) -> f64 {
        if self.recent.is_empty() {
            self.params.initial_performance
        } else {
            self.recent.iter().sum::<f64>() / self.recent.len() as f64
        }
    }

    pub fn record_performance(&mut self, perf: f64) {
        if self.recent.len() == self.params.performance_window {
            self.recent.pop_front();
        }
        self.recent.push_back(perf.clamp(0.0, 1.0));
    }

    pub fn reset(&mut self) {
        self.recent.clear();
    }

    pub fn performance_index(&self, instruction: f64, response_kw: f64, price: f64) -> f64 {
        performance_index(
            self.params.capacity_kw,
            instruction,
            response_kw,
            price,
            self.params.tolerance_kw,
        )
    }
}

/// Payment for one step: `perf * price * C`, prorated over the settlement hour.
pub fn step_revenue(account: &MarketAccount, perf: f64, price: f64, step_seconds: f64) -> f64 {
    perf * price * account.params.capacity_kw * step_seconds / 3600.0
}
