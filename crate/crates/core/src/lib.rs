//! Dispatch of distribution-connected battery fleets for frequency regulation.
//!
//! The crate is `no_std` (with `alloc`) so the numerical kernels can be embedded
//! anywhere; enable the `std` feature for wall-clock timing of expert solves.
//!
//! Modules, bottom-up:
//!
//! - [`grid`]: radial three-phase feeder, linearized power flow and a
//!   backward/forward sweep used to validate it.
//! - [`bess`]: battery ratings and state-of-charge evolution.
//! - [`market`]: regulation scenarios, performance index, payments, aging cost.
//! - [`lp`]: dense bounded-variable simplex and complementarity branch-and-bound.
//! - [`expert`]: the operator's mixed-integer dispatch problem and demonstrations.
//! - [`env`]: the constrained MDP wrapping grid, batteries and market.
//! - [`learn`]: MLP with reverse-mode gradients, Adam, constrained SAC and the
//!   SQIL replay buffer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bess;
pub mod env;
pub mod expert;
pub mod grid;
pub mod learn;
pub mod lp;
pub mod market;
pub(crate) mod math;

pub use bess::{BatterySpec, FleetState};
pub use env::{Env, EnvConfig, EnvState, StepOutcome, Transition};
pub use expert::{DispatchProblem, DispatchSchedule};
pub use grid::{Feeder, InjectionSet, Phase, PowerFlowSolution};
pub use lp::{LpProblem, LpSolution, LpStatus};
pub use market::{MarketAccount, RegulationScenario};
