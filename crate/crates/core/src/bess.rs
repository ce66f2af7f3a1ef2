//! Battery ratings and state-of-charge evolution.
//!
//! Sign convention inside this module: `p > 0` charges the battery (withdrawal
//! from the grid), `p < 0` discharges it. Energies are kWh, powers kW,
//! durations hours.

use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::grid::Phase;

/// Slack allowed when checking SoC bounds after a step, kWh.
const SOC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BessError {
    #[error("battery {id}: energy {energy:.6} kWh outside [{lo:.6}, {hi:.6}]")]
    SocOutOfBounds {
        id: String,
        energy: f64,
        lo: f64,
        hi: f64,
    },
    #[error("battery {id}: power {power:.6} kW exceeds rating {rating:.6} kW")]
    PowerOutOfRange { id: String, power: f64, rating: f64 },
    #[error("battery {id}: {reason}")]
    InvalidSpec { id: String, reason: &'static str },
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BatterySpec {
    pub id: String,
    /// Feeder node name the unit is attached to.
    pub node: String,
    pub phase: Phase,
    /// Symmetric power rating, kW.
    pub power_kw: f64,
    pub energy_kwh: f64,
    /// Single-trip efficiency in (0, 1].
    pub efficiency: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Initial state of charge as a fraction of `energy_kwh`.
    pub initial_soc: f64,
    /// Weight of this unit in the expert objective.
    pub priority: f64,
    /// Throughput budget per dispatch horizon, kWh.
    pub energy_budget_kwh: f64,
    /// Per-step availability; empty means always available, otherwise indexed
    /// cyclically by step.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Vec::is_empty"))]
    pub availability: Vec<bool>,
}

impl BatterySpec {
    /// ±10 kW / 4.21 kWh unit with default efficiency and SoC window.
    pub fn standard(id: impl Into<String>, node: impl Into<String>, phase: Phase) -> Self {
        BatterySpec {
            id: id.into(),
            node: node.into(),
            phase,
            power_kw: 10.0,
            energy_kwh: 4.21,
            efficiency: 0.95,
            soc_min: 0.1,
            soc_max: 0.9,
            initial_soc: 0.5,
            priority: 1.0,
            energy_budget_kwh: 4.21,
            availability: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BessError> {
        let bad = |reason| {
            Err(BessError::InvalidSpec {
                id: self.id.clone(),
                reason,
            })
        };
        if !(self.power_kw > 0.0) {
            return bad("power rating must be positive");
        }
        if !(self.energy_kwh > 0.0) {
            return bad("energy rating must be positive");
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad("efficiency must lie in (0, 1]");
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return bad("SoC bounds must satisfy 0 <= soc_min < soc_max <= 1");
        }
        if !(self.soc_min <= self.initial_soc && self.initial_soc <= self.soc_max) {
            return bad("initial SoC must lie within the SoC bounds");
        }
        if !(0.0..=1.0).contains(&self.priority) {
            return bad("priority must lie in [0, 1]");
        }
        if !(self.energy_budget_kwh >= 0.0) {
            return bad("energy budget must be non-negative");
        }
        Ok(())
    }

    pub fn e_min(&self) -> f64 {
        self.soc_min * self.energy_kwh
    }

    pub fn e_max(&self) -> f64 {
        self.soc_max * self.energy_kwh
    }

    pub fn initial_energy(&self) -> f64 {
        self.initial_soc * self.energy_kwh
    }

    pub fn available_at(&self, step: usize) -> bool {
        if self.availability.is_empty() {
            true
        } else {
            self.availability[step % self.availability.len()]
        }
    }

    /// Throughput weight per kW·h: `eta` when charging, `1/eta` when discharging.
    pub fn throughput_weight(&self, p: f64) -> f64 {
        if p >= 0.0 {
            self.efficiency
        } else {
            1.0 / self.efficiency
        }
    }
}

/// Energy after applying `p` for `d` hours.
pub fn step_soc(spec: &BatterySpec, e_prev: f64, p: f64, d: f64) -> Result<f64, BessError> {
    if p.abs() > spec.power_kw * (1.0 + 1e-12) + 1e-12 {
        return Err(BessError::PowerOutOfRange {
            id: spec.id.clone(),
            power: p,
            rating: spec.power_kw,
        });
    }
    let eta = spec.efficiency;
    let e = e_prev + d * eta * p.max(0.0) - d * (-p).max(0.0) / eta;
    let (lo, hi) = (spec.e_min(), spec.e_max());
    if e < lo - SOC_TOL || e > hi + SOC_TOL {
        return Err(BessError::SocOutOfBounds {
            id: spec.id.clone(),
            energy: e,
            lo,
            hi,
        });
    }
    Ok(e.clamp(lo, hi))
}

/// Tightest `(p_lo, p_hi)` within the available rating keeping the next SoC in bounds.
pub fn feasible_power_range(spec: &BatterySpec, e: f64, d: f64, available: bool) -> (f64, f64) {
    if !available {
        return (0.0, 0.0);
    }
    let rating = spec.power_kw;
    if !(d > 0.0) {
        return (-rating, rating);
    }
    let eta = spec.efficiency;
    let headroom = (spec.e_max() - e).max(0.0);
    let stored = (e - spec.e_min()).max(0.0);
    let p_hi = rating.min(headroom / (eta * d));
    let p_lo = -rating.min(stored * eta / d);
    (p_lo, p_hi)
}

/// Energies of the whole fleet at step `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct FleetState {
    pub energy_kwh: Vec<f64>,
    pub step_hours: f64,
    pub t: usize,
}

impl FleetState {
    pub fn initial(fleet: &[BatterySpec], step_hours: f64) -> Self {
        FleetState {
            energy_kwh: fleet.iter().map(BatterySpec::initial_energy).collect(),
            step_hours,
            t: 0,
        }
    }

    pub fn soc(&self, fleet: &[BatterySpec]) -> Vec<f64> {
        self.energy_kwh
            .iter()
            .zip(fleet)
            .map(|(e, s)| e / s.energy_kwh)
            .collect()
    }

    /// Applies one step of charging powers; all-or-nothing on error.
    pub fn advance(&mut self, fleet: &[BatterySpec], power_kw: &[f64]) -> Result<(), BessError> {
        let next = fleet
            .iter()
            .zip(&self.energy_kwh)
            .zip(power_kw)
            .map(|((spec, &e), &p)| step_soc(spec, e, p, self.step_hours))
            .collect::<Result<Vec<_>, _>>()?;
        self.energy_kwh = next;
        self.t += 1;
        Ok(())
    }
}
