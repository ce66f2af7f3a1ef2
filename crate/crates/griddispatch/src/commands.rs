//! Subcommand implementations. Each writes its files atomically and returns
//! what it computed so callers and tests can inspect it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use griddispatch_core::bess::BatterySpec;
use griddispatch_core::expert::{resimulate_step, solve_dispatch, DispatchProblem};
use griddispatch_core::grid::{count_violations, solve_linear, solve_nonlinear_sweep, Feeder, InjectionSet, Phase};
use griddispatch_core::learn::{train_run, EpisodeMetrics, TrainArtifact};
use griddispatch_core::market::{synthesize_scenario, RegulationScenario};
use griddispatch_core::{DispatchSchedule, LpStatus};

use crate::checkpoint::{Checkpoint, DemoFile};
use crate::config::{Mode, Provenance, RunConfig};
use crate::experiment::{evaluate_expert, evaluate_policy, Evaluation, Experiment, TraceRow};
use crate::output::{write_atomic, CsvTable};
use crate::scenario_io::{fmt_f64, scenario_table};
use crate::svg::{line_plot, Series};

pub const METRICS_HEADER: [&str; 10] = [
    "episode",
    "reward",
    "cost",
    "lambda",
    "q_loss",
    "v_loss",
    "policy_loss",
    "eval_profit",
    "eval_violations",
    "evaluated",
];
pub const TRAJECTORY_HEADER: [&str; 8] = ["episode", "t", "reward", "cost", "p_target", "p_response", "min_v", "max_v"];
pub const EVALUATION_HEADER: [&str; 6] = ["algorithm", "episodes", "steps", "profit", "violations_per_step", "infeasible_steps"];
pub const TIMING_HEADER: [&str; 3] = ["algorithm", "decisions", "mean_decision_seconds"];
pub const COMPARISON_HEADER: [&str; 5] = ["algorithm", "profit", "violations_per_step", "profit_delta", "violations_delta"];
pub const SCHEDULE_HEADER: [&str; 3] = ["t", "battery", "p_kw"];
pub const SOLVE_SUMMARY_HEADER: [&str; 5] = ["status", "objective", "capacity_kw", "steps", "violations"];
pub const VOLTAGE_HEADER: [&str; 3] = ["node", "phase", "v_mag_pu"];
pub const INJECTION_HEADER: [&str; 4] = ["node", "phase", "p_pu", "q_pu"];

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const FINAL_CHECKPOINT_FILE: &str = "final.json";
pub const EVALUATION_FILE: &str = "evaluation.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

pub fn metrics_table(metrics: &[EpisodeMetrics]) -> CsvTable {
    let mut t = CsvTable::new(&METRICS_HEADER);
    for m in metrics {
        t.push(vec![
            m.episode.to_string(),
            fmt_f64(m.reward),
            fmt_f64(m.cost),
            fmt_f64(m.lambda),
            fmt_f64(m.q_loss),
            fmt_f64(m.v_loss),
            fmt_f64(m.policy_loss),
            fmt_f64(m.eval_profit),
            fmt_f64(m.eval_violations),
            u8::from(m.evaluated).to_string(),
        ]);
    }
    t
}

pub fn trajectory_table(trace: &[TraceRow]) -> CsvTable {
    let mut t = CsvTable::new(&TRAJECTORY_HEADER);
    for r in trace {
        t.push(vec![
            r.episode.to_string(),
            r.t.to_string(),
            fmt_f64(r.reward),
            fmt_f64(r.cost),
            fmt_f64(r.p_target_kw),
            fmt_f64(r.p_response_kw),
            fmt_f64(r.min_v),
            fmt_f64(r.max_v),
        ]);
    }
    t
}

fn curves(metrics: &[EpisodeMetrics], mode: Mode) -> (String, String) {
    let ep = |m: &EpisodeMetrics| m.episode as f64 + 1.0;
    let evals: Vec<&EpisodeMetrics> = metrics.iter().filter(|m| m.evaluated).collect();
    let reward = line_plot(
        &format!("{mode}: profit"),
        "episode",
        "$ per episode / step",
        &[
            Series::new("evaluation profit", evals.iter().map(|m| (ep(m), m.eval_profit)).collect()),
            Series::new("training reward", metrics.iter().map(|m| (ep(m), m.reward)).collect()),
        ],
    );
    let violations = line_plot(
        &format!("{mode}: voltage violations"),
        "episode",
        "violations per step",
        &[
            Series::new("evaluation", evals.iter().map(|m| (ep(m), m.eval_violations)).collect()),
            Series::new("training", metrics.iter().map(|m| (ep(m), m.cost)).collect()),
        ],
    );
    (reward, violations)
}

/// Demonstrations from the configured cache file, or freshly generated.
pub fn load_or_generate_demos(exp: &Experiment) -> Result<Vec<griddispatch_core::Transition>> {
    let cfg = &exp.config;
    if let Some(path) = &cfg.train.demos {
        let file = DemoFile::load(path)?;
        if file.config_hash != cfg.hash() {
            log::warn!("{} was generated under a different configuration", path.display());
        }
        return Ok(file.transitions);
    }
    if cfg.train.demo_episodes == 0 {
        bail!("csac-sqil needs demonstrations: set train.demo_episodes or train.demos");
    }
    exp.demonstrations(cfg.train.demo_episodes, cfg.run.seed)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub artifact: TrainArtifact,
    pub out_dir: PathBuf,
}

/// Trains the configured agent and writes metrics, checkpoints, curves and
/// the resolved configuration to `run.output_dir`.
pub fn cmd_train(cfg: &RunConfig, prov: &Provenance) -> Result<TrainOutcome> {
    cfg.require_learning(prov)?;
    let exp = Experiment::new(cfg)?;
    let mut tc = cfg.train_config();
    tc.eval_offsets = exp.validation_offsets();
    let demos = match cfg.run.mode {
        Mode::CsacSqil => Some(load_or_generate_demos(&exp)?),
        _ => None,
    };
    let mut env = exp.train_env()?;
    let mut eval_env = exp.eval_env()?;
    let started = Instant::now();
    let artifact = train_run(&tc, &mut env, &mut eval_env, demos)?;
    log::info!("trained {} episodes in {:.1?}", tc.episodes, started.elapsed());

    let out = &cfg.run.output_dir;
    let hash = cfg.hash();
    let mode = cfg.run.mode.as_str();
    metrics_table(&artifact.metrics).write(&out.join(METRICS_FILE))?;
    let (best_episode, best) = match &artifact.best {
        Some((e, a)) => (Some(*e), a.clone()),
        None => (None, artifact.agent.clone()),
    };
    Checkpoint::new(best, hash.clone(), mode, best_episode).save(&out.join(CHECKPOINT_FILE))?;
    Checkpoint::new(artifact.agent.clone(), hash, mode, artifact.metrics.last().map(|m| m.episode))
        .save(&out.join(FINAL_CHECKPOINT_FILE))?;
    let (reward, violations) = curves(&artifact.metrics, cfg.run.mode);
    write_atomic(&out.join("reward_curve.svg"), reward.as_bytes())?;
    write_atomic(&out.join("violation_curve.svg"), violations.as_bytes())?;
    write_atomic(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    Ok(TrainOutcome {
        artifact,
        out_dir: out.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct EvaluateOutcome {
    pub algorithm: String,
    pub evaluation: Evaluation,
}

pub fn evaluation_table(algorithm: &str, e: &Evaluation) -> CsvTable {
    let mut t = CsvTable::new(&EVALUATION_HEADER);
    t.push(vec![
        algorithm.to_string(),
        e.report.episodes.to_string(),
        e.report.steps.to_string(),
        fmt_f64(e.report.profit),
        fmt_f64(e.report.violations),
        e.infeasible_steps.to_string(),
    ]);
    t
}

/// Deterministic rollouts on the held-out test windows. Learning modes need a
/// checkpoint; `milp` runs the receding-horizon expert.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path) -> Result<EvaluateOutcome> {
    let exp = Experiment::new(cfg)?;
    let offsets = exp.test_offsets();
    let mut env = exp.eval_env()?;
    let (algorithm, evaluation) = match (cfg.run.mode, checkpoint) {
        (Mode::Milp, _) => (Mode::Milp.as_str().to_string(), evaluate_expert(&mut env, &offsets)?),
        (_, Some(path)) => {
            let ck = Checkpoint::load(path)?;
            ck.check_shape(env.observation_len(), env.action_len())?;
            if ck.config_hash != cfg.hash() {
                log::warn!("{} was trained under a different configuration", path.display());
            }
            (ck.mode.clone(), evaluate_policy(&ck.agent, &mut env, &offsets)?)
        }
        (mode, None) => bail!("evaluating {mode} needs a checkpoint"),
    };
    evaluation_table(&algorithm, &evaluation).write(&out.join(EVALUATION_FILE))?;
    trajectory_table(&evaluation.trace).write(&out.join(TRAJECTORY_FILE))?;
    let mut timing = CsvTable::new(&TIMING_HEADER);
    timing.push(vec![
        algorithm.clone(),
        evaluation.report.steps.to_string(),
        fmt_f64(evaluation.mean_decision_seconds),
    ]);
    timing.write(&out.join(TIMING_FILE))?;
    Ok(EvaluateOutcome { algorithm, evaluation })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub algorithm: String,
    pub profit: f64,
    pub violations: f64,
    pub decision_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderingCheck {
    pub claim: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub checks: Vec<OrderingCheck>,
}

fn number(table: &CsvTable, col: &str, dir: &Path) -> Result<f64> {
    let v = table
        .column(col)
        .and_then(|c| c.first().copied())
        .with_context(|| format!("{}: missing column {col}", dir.display()))?;
    v.parse().with_context(|| format!("{}: {col} = \"{v}\"", dir.display()))
}

pub fn read_run(dir: &Path) -> Result<ComparisonRow> {
    let path = dir.join(EVALUATION_FILE);
    let text = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let table = CsvTable::parse(&text)?;
    let algorithm = table
        .column("algorithm")
        .and_then(|c| c.first().map(|s| s.to_string()))
        .with_context(|| format!("{}: no rows", path.display()))?;
    let decision_seconds = match std::fs::read(dir.join(TIMING_FILE)) {
        Ok(t) => Some(number(&CsvTable::parse(&t)?, "mean_decision_seconds", dir)?),
        Err(_) => None,
    };
    Ok(ComparisonRow {
        algorithm,
        profit: number(&table, "profit", dir)?,
        violations: number(&table, "violations_per_step", dir)?,
        decision_seconds,
    })
}

/// The profit and violation orderings that hold among the runs present.
pub fn ordering_checks(rows: &[ComparisonRow]) -> Vec<OrderingCheck> {
    let find = |name: &str| rows.iter().find(|r| r.algorithm == name);
    let mut checks = Vec::new();
    let (milp, sqil, csac) = (find("milp"), find("csac-sqil"), find("csac"));
    if let (Some(m), Some(s)) = (milp, sqil) {
        checks.push(OrderingCheck {
            claim: "profit milp >= csac-sqil".into(),
            pass: m.profit >= s.profit,
        });
    }
    if let (Some(s), Some(c)) = (sqil, csac) {
        checks.push(OrderingCheck {
            claim: "profit csac-sqil >= csac".into(),
            pass: s.profit >= c.profit,
        });
        checks.push(OrderingCheck {
            claim: "violations csac-sqil <= csac".into(),
            pass: s.violations <= c.violations,
        });
    }
    checks
}

/// Wall-times stay out of the table so that it is reproducible.
pub fn comparison_table(rows: &[ComparisonRow]) -> CsvTable {
    let mut t = CsvTable::new(&COMPARISON_HEADER);
    let base = rows.first();
    for r in rows {
        let (dp, dv) = base.map_or((0.0, 0.0), |b| (r.profit - b.profit, r.violations - b.violations));
        t.push(vec![
            r.algorithm.clone(),
            fmt_f64(r.profit),
            fmt_f64(r.violations),
            fmt_f64(dp),
            fmt_f64(dv),
        ]);
    }
    t
}

pub fn comparison_markdown(c: &Comparison) -> String {
    let mut s = String::from("| algorithm | profit ($/episode) | violations/step | decision time (s) |\n|---|---|---|---|\n");
    for r in &c.rows {
        let time = r.decision_seconds.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!("| {} | {:.4} | {:.4} | {} |\n", r.algorithm, r.profit, r.violations, time));
    }
    if !c.checks.is_empty() {
        s.push('\n');
        for k in &c.checks {
            s.push_str(&format!("- [{}] {}\n", if k.pass { "PASS" } else { "FAIL" }, k.claim));
        }
    }
    s
}

/// Tabulates evaluated runs (directories holding `evaluation.csv`).
pub fn cmd_compare(runs: &[PathBuf], out: &Path) -> Result<Comparison> {
    if runs.len() < 2 {
        bail!("compare needs at least two evaluated runs");
    }
    let rows = runs.iter().map(|d| read_run(d)).collect::<Result<Vec<_>>>()?;
    let comparison = Comparison {
        checks: ordering_checks(&rows),
        rows,
    };
    comparison_table(&comparison.rows).write(&out.join("comparison.csv"))?;
    write_atomic(&out.join("comparison.md"), comparison_markdown(&comparison).as_bytes())?;
    Ok(comparison)
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub schedule: DispatchSchedule,
    /// Violations counted when each scheduled step is re-simulated.
    pub violations: usize,
}

/// Solves one multi-step dispatch problem from the start of `start`.
pub fn solve_opf(
    feeder: &Feeder,
    fleet: &[BatterySpec],
    cfg: &RunConfig,
    scenario: &RegulationScenario,
    start: usize,
    horizon: usize,
) -> Result<SolveOutcome> {
    if horizon == 0 || start + horizon > scenario.len() {
        bail!(
            "steps {start}..{} fall outside the scenario of {} steps",
            start + horizon,
            scenario.len()
        );
    }
    let market = cfg.market_params();
    let dp = DispatchProblem {
        feeder,
        fleet,
        energy_kwh: fleet.iter().map(BatterySpec::initial_energy).collect(),
        start_step: start,
        step_hours: scenario.step_hours(),
        targets_kw: (start..start + horizon).map(|t| scenario.target_kw(market.capacity_kw, t)).collect(),
        prices: (start..start + horizon).map(|t| scenario.price(t)).collect(),
        previous_performance: market.initial_performance,
        market,
    };
    let schedule = solve_dispatch(&dp)?;
    let lim = feeder.limits();
    let mut violations = 0;
    for row in &schedule.power_kw {
        violations += count_violations(&resimulate_step(&dp, row)?, lim.v_min, lim.v_max);
    }
    Ok(SolveOutcome { schedule, violations })
}

pub fn schedule_table(schedule: &DispatchSchedule, fleet: &[BatterySpec], start: usize) -> CsvTable {
    let mut t = CsvTable::new(&SCHEDULE_HEADER);
    for (k, row) in schedule.power_kw.iter().enumerate() {
        for (b, p) in fleet.iter().zip(row) {
            t.push(vec![(start + k).to_string(), b.id.clone(), fmt_f64(*p)]);
        }
    }
    t
}

pub fn cmd_solve_opf(
    cfg: &RunConfig,
    scenario: &RegulationScenario,
    start: usize,
    horizon: usize,
    out: &Path,
) -> Result<SolveOutcome> {
    let exp = Experiment::new(cfg)?;
    let fleet = &exp.env_config.fleet;
    let outcome = solve_opf(&exp.env_config.feeder, fleet, cfg, scenario, start, horizon)?;
    let s = &outcome.schedule;
    schedule_table(s, fleet, start).write(&out.join("schedule.csv"))?;
    let mut summary = CsvTable::new(&SOLVE_SUMMARY_HEADER);
    summary.push(vec![
        format!("{:?}", s.status).to_lowercase(),
        fmt_f64(s.objective),
        fmt_f64(s.capacity_kw),
        horizon.to_string(),
        outcome.violations.to_string(),
    ]);
    summary.write(&out.join("summary.csv"))?;
    if s.status != LpStatus::Optimal {
        log::warn!("dispatch problem is {:?}", s.status);
    }
    Ok(outcome)
}

pub fn parse_injections(feeder: &Feeder, text: &str) -> Result<InjectionSet> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != INJECTION_HEADER {
        bail!("line 1: expected header \"{}\", found \"{}\"", INJECTION_HEADER.join(","), header.join(","));
    }
    let mut inj = InjectionSet::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.with_context(|| format!("line {line}"))?;
        let node = feeder
            .node_index(&rec[0])
            .with_context(|| format!("line {line}: unknown node \"{}\"", &rec[0]))?;
        let phase = Phase::parse(&rec[1]).with_context(|| format!("line {line}: unknown phase \"{}\"", &rec[1]))?;
        if !feeder.nodes()[node].phases.contains(phase) {
            bail!("line {line}: node \"{}\" has no phase {}", &rec[0], &rec[1]);
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .with_context(|| format!("line {line}: {} is not a number: \"{}\"", INJECTION_HEADER[i], &rec[i]))
        };
        inj.push(node, phase, num(2)?, num(3)?);
    }
    Ok(inj)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FlowMethod {
    Linear,
    Sweep,
}

/// Voltage magnitudes for one injection set.
pub fn voltage_table(feeder: &Feeder, inj: &InjectionSet, method: FlowMethod) -> Result<CsvTable> {
    let sol = match method {
        FlowMethod::Linear => solve_linear(feeder, inj)?,
        FlowMethod::Sweep => solve_nonlinear_sweep(feeder, inj, 1e-10, 100)?,
    };
    let mut t = CsvTable::new(&VOLTAGE_HEADER);
    for (n, ph, v) in sol.voltages() {
        t.push(vec![feeder.nodes()[n].name.clone(), ph.as_str().to_string(), fmt_f64(v)]);
    }
    Ok(t)
}

pub fn cmd_powerflow(feeder: &Feeder, injections: &str, method: FlowMethod, out: &Path) -> Result<CsvTable> {
    let inj = parse_injections(feeder, injections)?;
    let table = voltage_table(feeder, &inj, method)?;
    table.write(out)?;
    Ok(table)
}

pub fn cmd_gen_signal(seed: u64, steps: usize, step_seconds: f64, out: &Path) -> Result<RegulationScenario> {
    let s = synthesize_scenario(seed, steps, step_seconds)?;
    scenario_table(&s).write(out)?;
    Ok(s)
}

pub fn cmd_gen_demos(cfg: &RunConfig, episodes: usize, out: &Path) -> Result<DemoFile> {
    if episodes == 0 {
        bail!("at least one demonstration episode is needed");
    }
    let exp = Experiment::new(cfg)?;
    let file = DemoFile::new(exp.demonstrations(episodes, cfg.run.seed)?, cfg.hash());
    file.save(out)?;
    Ok(file)
}
