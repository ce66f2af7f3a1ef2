//! The operator's dispatch problem as a complementarity MILP, and expert
//! demonstrations rolled through the environment.
//!
//! Battery powers here use grid convention: `P+` discharges (injects), `P-`
//! charges. Variables, in order:
//!
//! 1. `P+[t][i]`, `P-[t][i]` for every step and battery;
//! 2. `e[t][i]`, stored energy at the end of step `t`;
//! 3. committed capacity `C`;
//! 4. per step, active flows, reactive flows and squared voltages for every
//!    line phase / non-source node phase.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::bess::BatterySpec;
use crate::env::{power_to_action, Env, EnvError, Transition};
use crate::grid::{solve_linear, Feeder, InjectionSet, Phase};
use crate::lp::{solve_milp, ComplementarityPair, LpError, LpProblem, LpStatus, Relation};
use crate::market::MarketParams;

/// Squared-voltage margin kept inside the limits so re-simulated schedules
/// never sit exactly on a bound.
const VOLTAGE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExpertError {
    #[error("battery {id} is placed on {node} phase {phase}, which the feeder does not have")]
    UnplacedBattery { id: String, node: String, phase: Phase },
    #[error("previous performance {previous:.4} is below the market minimum {minimum:.4}")]
    PerformanceGate { previous: f64, minimum: f64 },
    #[error("invalid dispatch problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// One dispatch decision over `targets_kw.len()` steps starting at `start_step`.
#[derive(Clone, Debug)]
pub struct DispatchProblem<'a> {
    pub feeder: &'a Feeder,
    pub fleet: &'a [BatterySpec],
    /// Stored energy before the first step, kWh.
    pub energy_kwh: Vec<f64>,
    /// Scenario step of the first decision; indexes battery availability.
    pub start_step: usize,
    pub step_hours: f64,
    /// Requested fleet output per step, grid convention, kW.
    pub targets_kw: Vec<f64>,
    /// Clearing price per step, $/kW.
    pub prices: Vec<f64>,
    pub market: MarketParams,
    pub previous_performance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DispatchSchedule {
    pub status: LpStatus,
    /// `power_kw[t][i]`, grid convention.
    pub power_kw: Vec<Vec<f64>>,
    /// `energy_kwh[t][i]` at the end of step `t`.
    pub energy_kwh: Vec<Vec<f64>>,
    /// `v_sq[t][node][phase]` predicted by the linear model; source included.
    pub v_sq: Vec<Vec<[f64; 3]>>,
    pub capacity_kw: f64,
    pub objective: f64,
    pub solve_seconds: f64,
}

/// Variable indices of a built problem.
#[derive(Clone, Debug)]
pub struct Layout {
    pub batteries: usize,
    pub horizon: usize,
    pub plus: Vec<Vec<usize>>,
    pub minus: Vec<Vec<usize>>,
    pub energy: Vec<Vec<usize>>,
    pub capacity: usize,
    /// `p_flow[t][line][phase]`, `None` where the line lacks the phase.
    pub p_flow: Vec<Vec<[Option<usize>; 3]>>,
    pub q_flow: Vec<Vec<[Option<usize>; 3]>>,
    pub v_sq: Vec<Vec<[Option<usize>; 3]>>,
}

impl Layout {
    pub fn pairs(&self) -> Vec<ComplementarityPair> {
        let mut out = Vec::with_capacity(self.batteries * self.horizon);
        for t in 0..self.horizon {
            for i in 0..self.batteries {
                out.push(ComplementarityPair {
                    plus: self.plus[t][i],
                    minus: self.minus[t][i],
                });
            }
        }
        out
    }
}

impl DispatchProblem<'_> {
    pub fn horizon(&self) -> usize {
        self.targets_kw.len()
    }

    fn placement(&self) -> Result<Vec<(usize, Phase)>, ExpertError> {
        self.fleet
            .iter()
            .map(|b| {
                self.feeder
                    .node_index(&b.node)
                    .filter(|&n| self.feeder.nodes()[n].phases.contains(b.phase))
                    .map(|n| (n, b.phase))
                    .ok_or_else(|| ExpertError::UnplacedBattery {
                        id: b.id.clone(),
                        node: b.node.clone(),
                        phase: b.phase,
                    })
            })
            .collect()
    }

    fn validate(&self) -> Result<(), ExpertError> {
        let bad = |s: String| Err(ExpertError::Invalid(s));
        if self.targets_kw.is_empty() {
            return bad("horizon must be at least one step".into());
        }
        if self.prices.len() != self.targets_kw.len() {
            return bad(format!(
                "{} prices for {} steps",
                self.prices.len(),
                self.targets_kw.len()
            ));
        }
        if self.energy_kwh.len() != self.fleet.len() {
            return bad(format!(
                "{} energies for {} batteries",
                self.energy_kwh.len(),
                self.fleet.len()
            ));
        }
        if !(self.step_hours > 0.0) {
            return bad("step duration must be positive".into());
        }
        if self.targets_kw.iter().chain(&self.prices).any(|v| !v.is_finite()) {
            return bad("targets and prices must be finite".into());
        }
        for b in self.fleet {
            b.validate().map_err(|e| ExpertError::Invalid(format!("{e}")))?;
        }
        self.market
            .validate()
            .map_err(|e| ExpertError::Invalid(format!("{e}")))?;
        Ok(())
    }
}

/// Builds the MILP and its complementarity pairs.
pub fn build_problem(dp: &DispatchProblem) -> Result<(LpProblem, Vec<ComplementarityPair>), ExpertError> {
    let (lp, layout) = build_with_layout(dp)?;
    let pairs = layout.pairs();
    Ok((lp, pairs))
}

pub fn build_with_layout(dp: &DispatchProblem) -> Result<(LpProblem, Layout), ExpertError> {
    dp.validate()?;
    let placement = dp.placement()?;
    if dp.previous_performance < dp.market.rho_min {
        return Err(ExpertError::PerformanceGate {
            previous: dp.previous_performance,
            minimum: dp.market.rho_min,
        });
    }

    let feeder = dp.feeder;
    let m = dp.fleet.len();
    let h = dp.horizon();
    let d = dp.step_hours;
    let kva = feeder.bases().kva;
    let limits = feeder.limits();
    let v_lo = limits.v_min * limits.v_min + VOLTAGE_MARGIN;
    let v_hi = limits.v_max * limits.v_max - VOLTAGE_MARGIN;
    let eps = dp.market.tolerance_kw;

    let mut lp = LpProblem::new();
    let mut plus = vec![vec![0; m]; h];
    let mut minus = vec![vec![0; m]; h];
    for t in 0..h {
        for (i, b) in dp.fleet.iter().enumerate() {
            let cap = if b.available_at(dp.start_step + t) { b.power_kw } else { 0.0 };
            plus[t][i] = lp.add_var(format!("pdis_{}_{}", b.id, t), 0.0, cap, b.priority);
            minus[t][i] = lp.add_var(format!("pch_{}_{}", b.id, t), 0.0, cap, b.priority);
        }
    }
    let mut energy = vec![vec![0; m]; h];
    for (t, row) in energy.iter_mut().enumerate() {
        for (i, b) in dp.fleet.iter().enumerate() {
            row[i] = lp.add_var(format!("e_{}_{}", b.id, t), b.e_min(), b.e_max(), 0.0);
        }
    }
    let mean_price = dp.prices.iter().sum::<f64>() / h as f64;
    let capacity = lp.add_var(
        "capacity",
        0.0,
        dp.market.capacity_cap_kw,
        dp.previous_performance * mean_price,
    );

    let lines = feeder.lines();
    let nodes = feeder.nodes();
    let mut p_flow = vec![vec![[None; 3]; lines.len()]; h];
    let mut q_flow = vec![vec![[None; 3]; lines.len()]; h];
    let mut v_sq = vec![vec![[None; 3]; nodes.len()]; h];
    let free = f64::INFINITY;
    for t in 0..h {
        for (l, line) in lines.iter().enumerate() {
            for p in line.phases.iter() {
                p_flow[t][l][p.index()] =
                    Some(lp.add_var(format!("pf_{}_{}_{}", l, p, t), -free, free, 0.0));
            }
        }
        for (l, line) in lines.iter().enumerate() {
            for p in line.phases.iter() {
                q_flow[t][l][p.index()] =
                    Some(lp.add_var(format!("qf_{}_{}_{}", l, p, t), -free, free, 0.0));
            }
        }
        for (j, node) in nodes.iter().enumerate() {
            if j == feeder.source() {
                continue;
            }
            for p in node.phases.iter() {
                v_sq[t][j][p.index()] = Some(lp.add_var(
                    format!("v_{}_{}_{}", node.name, p, t),
                    v_lo,
                    v_hi,
                    0.0,
                ));
            }
        }
    }

    for t in 0..h {
        let target = dp.targets_kw[t];
        let through: Vec<(usize, f64)> = (0..m)
            .flat_map(|i| [(plus[t][i], 1.0), (minus[t][i], 1.0)])
            .collect();
        let signed: Vec<(usize, f64)> = (0..m)
            .flat_map(|i| [(plus[t][i], 1.0), (minus[t][i], -1.0)])
            .collect();
        lp.add_constraint(
            format!("band_hi_{t}"),
            through.clone(),
            Relation::Le,
            target.abs() + eps,
        );
        let floor = (target.abs() - eps).max(0.0);
        if floor > 0.0 {
            lp.add_constraint(format!("band_lo_{t}"), through, Relation::Ge, floor);
        }
        lp.add_constraint(format!("track_hi_{t}"), signed.clone(), Relation::Le, target + eps);
        lp.add_constraint(format!("track_lo_{t}"), signed, Relation::Ge, target - eps);
    }

    for (i, b) in dp.fleet.iter().enumerate() {
        let eta = b.efficiency;
        let terms: Vec<(usize, f64)> = (0..h)
            .flat_map(|t| [(plus[t][i], d / eta), (minus[t][i], d * eta)])
            .collect();
        lp.add_constraint(
            format!("budget_{}", b.id),
            terms,
            Relation::Le,
            b.energy_budget_kwh,
        );
        for t in 0..h {
            let mut terms = vec![
                (energy[t][i], 1.0),
                (minus[t][i], -d * eta),
                (plus[t][i], d / eta),
            ];
            let rhs = if t == 0 {
                dp.energy_kwh[i]
            } else {
                terms.push((energy[t - 1][i], -1.0));
                0.0
            };
            lp.add_constraint(format!("soc_{}_{}", b.id, t), terms, Relation::Eq, rhs);
        }
    }

    let v_source = feeder.source_voltage() * feeder.source_voltage();
    for t in 0..h {
        for (l, line) in lines.iter().enumerate() {
            let j = line.to;
            for p in line.phases.iter() {
                let k = p.index();
                let mut pt = vec![(p_flow[t][l][k].expect("line phase"), 1.0)];
                let mut qt = vec![(q_flow[t][l][k].expect("line phase"), 1.0)];
                for &c in feeder.child_lines(j) {
                    if let Some(v) = p_flow[t][c][k] {
                        pt.push((v, -1.0));
                    }
                    if let Some(v) = q_flow[t][c][k] {
                        qt.push((v, -1.0));
                    }
                }
                for (i, &(node, phase)) in placement.iter().enumerate() {
                    if node == j && phase == p {
                        pt.push((plus[t][i], 1.0 / kva));
                        pt.push((minus[t][i], -1.0 / kva));
                    }
                }
                let load = feeder.loads()[j][k];
                lp.add_constraint(format!("pbal_{}_{}_{}", nodes[j].name, p, t), pt, Relation::Eq, load.re);
                lp.add_constraint(format!("qbal_{}_{}_{}", nodes[j].name, p, t), qt, Relation::Eq, load.im);
            }
        }
        for (l, line) in lines.iter().enumerate() {
            let (i_node, j) = (line.from, line.to);
            for p in line.phases.iter() {
                let k = p.index();
                let mut terms = vec![(v_sq[t][j][k].expect("node phase"), 1.0)];
                let mut rhs = 0.0;
                if i_node == feeder.source() {
                    rhs = v_source;
                } else {
                    terms.push((v_sq[t][i_node][k].expect("node phase"), -1.0));
                }
                for q in line.phases.iter() {
                    let (a, b) = feeder.drop_coefficients(l, p, q);
                    if a != 0.0 {
                        terms.push((p_flow[t][l][q.index()].expect("line phase"), a));
                    }
                    if b != 0.0 {
                        terms.push((q_flow[t][l][q.index()].expect("line phase"), b));
                    }
                }
                lp.add_constraint(
                    format!("drop_{}_{}_{}", nodes[j].name, p, t),
                    terms,
                    Relation::Eq,
                    rhs,
                );
            }
        }
    }

    let layout = Layout {
        batteries: m,
        horizon: h,
        plus,
        minus,
        energy,
        capacity,
        p_flow,
        q_flow,
        v_sq,
    };
    Ok((lp, layout))
}

/// Solves the dispatch MILP. Infeasible or unbounded problems come back with
/// that status and empty trajectories.
pub fn solve_dispatch(dp: &DispatchProblem) -> Result<DispatchSchedule, ExpertError> {
    let (lp, layout) = build_with_layout(dp)?;
    #[cfg(feature = "std")]
    let started = std::time::Instant::now();
    let sol = solve_milp(&lp, &layout.pairs())?;
    #[cfg(feature = "std")]
    let solve_seconds = started.elapsed().as_secs_f64();
    #[cfg(not(feature = "std"))]
    let solve_seconds = 0.0;

    if sol.status != LpStatus::Optimal {
        return Ok(DispatchSchedule {
            status: sol.status,
            power_kw: Vec::new(),
            energy_kwh: Vec::new(),
            v_sq: Vec::new(),
            capacity_kw: 0.0,
            objective: f64::NAN,
            solve_seconds,
        });
    }
    let x = &sol.x;
    let h = layout.horizon;
    let m = layout.batteries;
    let power_kw = (0..h)
        .map(|t| (0..m).map(|i| x[layout.plus[t][i]] - x[layout.minus[t][i]]).collect())
        .collect();
    let energy_kwh = (0..h)
        .map(|t| (0..m).map(|i| x[layout.energy[t][i]]).collect())
        .collect();
    let v_source = dp.feeder.source_voltage() * dp.feeder.source_voltage();
    let source = dp.feeder.source();
    let v_sq = (0..h)
        .map(|t| {
            layout.v_sq[t]
                .iter()
                .enumerate()
                .map(|(j, row)| {
                    let mut out = [0.0; 3];
                    for p in dp.feeder.nodes()[j].phases.iter() {
                        out[p.index()] = if j == source {
                            v_source
                        } else {
                            row[p.index()].map_or(0.0, |v| x[v])
                        };
                    }
                    out
                })
                .collect()
        })
        .collect();
    Ok(DispatchSchedule {
        status: LpStatus::Optimal,
        power_kw,
        energy_kwh,
        v_sq,
        capacity_kw: x[layout.capacity],
        objective: sol.objective,
        solve_seconds,
    })
}

/// Single-step dispatch problem for the environment's current state.
pub fn problem_for_env(env: &Env) -> DispatchProblem<'_> {
    let cfg = env.config();
    DispatchProblem {
        feeder: &cfg.feeder,
        fleet: &cfg.fleet,
        energy_kwh: env.energies().to_vec(),
        start_step: env.scenario_step(),
        step_hours: env.step_hours(),
        targets_kw: vec![env.current_target_kw()],
        prices: vec![env.current_price()],
        market: cfg.market.clone(),
        previous_performance: env.account().previous_performance(),
    }
}

/// The expert's action for the environment's current step, or `None` when the
/// step's dispatch problem has no feasible schedule.
pub fn expert_action(env: &Env) -> Result<Option<(Vec<f64>, DispatchSchedule)>, ExpertError> {
    let dp = problem_for_env(env);
    let schedule = match solve_dispatch(&dp) {
        Ok(s) => s,
        Err(ExpertError::PerformanceGate { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    if schedule.status != LpStatus::Optimal {
        return Ok(None);
    }
    let action = env
        .power_ranges()
        .into_iter()
        .zip(&schedule.power_kw[0])
        .map(|(range, &p_grid)| power_to_action(range, -p_grid))
        .collect();
    Ok(Some((action, schedule)))
}

/// Summary of expert demonstration episodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemoReport {
    pub steps: usize,
    pub skipped: usize,
    pub profit: f64,
    pub violations: f64,
    pub solve_seconds: f64,
}

/// Rolls the expert through one episode per seed and returns SQIL
/// demonstrations (`reward = +1`, `demo = true`).
///
/// Steps whose dispatch problem is infeasible are logged and the fleet idles
/// for that step; the idle step is not recorded as a demonstration.
pub fn generate_demonstrations(env: &mut Env, seeds: &[u64]) -> Result<(Vec<Transition>, DemoReport), ExpertError> {
    let mut out = Vec::new();
    let mut report = DemoReport::default();
    for &seed in seeds {
        let mut state = env.reset(seed)?;
        while !env.is_done() {
            let expert = expert_action(env)?;
            let (action, skipped) = match expert {
                Some((a, sched)) => {
                    report.solve_seconds += sched.solve_seconds;
                    (a, false)
                }
                None => {
                    log::warn!(
                        "expert dispatch infeasible at scenario step {}; idling",
                        env.scenario_step()
                    );
                    (vec![0.0; env.action_len()], true)
                }
            };
            let outcome = env.step(&action)?;
            report.steps += 1;
            report.profit += outcome.reward;
            report.violations += outcome.cost;
            if skipped {
                report.skipped += 1;
            } else {
                out.push(Transition {
                    state: state.observation,
                    action,
                    reward: 1.0,
                    cost: outcome.cost,
                    next_state: outcome.state.observation.clone(),
                    done: outcome.done,
                    demo: true,
                });
            }
            state = outcome.state;
        }
    }
    Ok((out, report))
}

/// Re-simulates a schedule step through the linear power flow.
pub fn resimulate_step(dp: &DispatchProblem, power_kw: &[f64]) -> Result<crate::grid::PowerFlowSolution, ExpertError> {
    let placement = dp.placement()?;
    let kva = dp.feeder.bases().kva;
    let mut inj = InjectionSet::new();
    for (&p, &(node, phase)) in power_kw.iter().zip(&placement) {
        inj.push(node, phase, p / kva, 0.0);
    }
    solve_linear(dp.feeder, &inj).map_err(|e| ExpertError::Invalid(format!("{e}")))
}
