use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use griddispatch::commands::{self, FlowMethod};
use griddispatch::config::{Provenance, RunConfig};
use griddispatch::feeder_io::{feeder13, load_feeder};
use griddispatch::scenario_io::load_scenario;
use griddispatch_core::market::DEFAULT_STEP_SECONDS;

/// Battery fleet dispatch for frequency regulation on distribution feeders.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Seed for every random choice; overrides `run.seed` in the configuration.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a csac or csac-sqil agent.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `run.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out a checkpoint (or the MILP expert) on held-out windows.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint written by `train`; not needed for mode "milp".
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate evaluated runs and check the expected orderings.
    Compare {
        /// Directories written by `evaluate`.
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one multi-step dispatch problem and write the schedule.
    SolveOpf {
        /// Fleet and market configuration.
        #[arg(long)]
        config: PathBuf,
        /// Feeder JSON; overrides `grid.feeder`.
        #[arg(long)]
        feeder: Option<PathBuf>,
        /// Scenario CSV (`t,r,price`).
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Voltage magnitudes for an injection CSV (`node,phase,p_pu,q_pu`).
    Powerflow {
        /// Feeder JSON; the bundled thirteen-node feeder when omitted.
        #[arg(long)]
        feeder: Option<PathBuf>,
        #[arg(long)]
        injections: PathBuf,
        #[arg(long, value_enum, default_value_t = FlowMethod::Linear)]
        method: FlowMethod,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize a regulation scenario CSV.
    GenSignal {
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_STEP_SECONDS)]
        step_seconds: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate expert demonstrations for csac-sqil training.
    GenDemos {
        #[arg(long)]
        config: PathBuf,
        /// Episodes; defaults to `train.demo_episodes`.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<(RunConfig, Provenance)> {
    let (mut cfg, prov) = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    Ok((cfg, prov))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let (mut cfg, prov) = load_config(&config, cli.seed)?;
            if let Some(o) = out {
                cfg.run.output_dir = o;
            }
            let outcome = commands::cmd_train(&cfg, &prov)?;
            let last = outcome.artifact.metrics.iter().rev().find(|m| m.evaluated);
            match last {
                Some(m) => println!(
                    "{} episodes, evaluation profit {:.4} $/episode, {:.4} violations/step; written to {}",
                    outcome.artifact.metrics.len(),
                    m.eval_profit,
                    m.eval_violations,
                    outcome.out_dir.display()
                ),
                None => println!("no episodes run; initial parameters written to {}", outcome.out_dir.display()),
            }
        }
        Command::Evaluate { config, checkpoint, out } => {
            let (cfg, _) = load_config(&config, cli.seed)?;
            let o = commands::cmd_evaluate(&cfg, checkpoint.as_deref(), &out)?;
            let r = &o.evaluation.report;
            println!(
                "{}: {} episodes, profit {:.4} $/episode, {:.4} violations/step, {:.3e} s per decision",
                o.algorithm, r.episodes, r.profit, r.violations, o.evaluation.mean_decision_seconds
            );
        }
        Command::Compare { runs, out } => {
            let c = commands::cmd_compare(&runs, &out)?;
            print!("{}", commands::comparison_markdown(&c));
        }
        Command::SolveOpf {
            config,
            feeder,
            scenario,
            start,
            horizon,
            out,
        } => {
            let (mut cfg, _) = load_config(&config, cli.seed)?;
            if let Some(f) = feeder {
                cfg.grid.feeder = Some(f);
            }
            let sc = load_scenario(&scenario, cfg.scenario.step_seconds)?;
            let o = commands::cmd_solve_opf(&cfg, &sc, start, horizon, &out)?;
            println!(
                "{:?}: objective {:.6}, capacity {:.3} kW, {} violations, solved in {:.3} s",
                o.schedule.status, o.schedule.objective, o.schedule.capacity_kw, o.violations, o.schedule.solve_seconds
            );
        }
        Command::Powerflow {
            feeder,
            injections,
            method,
            out,
        } => {
            let f = match feeder {
                Some(p) => load_feeder(&p)?,
                None => feeder13(),
            };
            let text = std::fs::read_to_string(&injections).with_context(|| format!("reading {}", injections.display()))?;
            let t = commands::cmd_powerflow(&f, &text, method, &out)
                .with_context(|| format!("injections {}", injections.display()))?;
            println!("{} node phases written to {}", t.rows.len(), out.display());
        }
        Command::GenSignal { steps, step_seconds, out } => {
            let s = commands::cmd_gen_signal(cli.seed.unwrap_or(0), steps, step_seconds, &out)?;
            println!("{} steps written to {}", s.len(), out.display());
        }
        Command::GenDemos { config, episodes, out } => {
            let (cfg, _) = load_config(&config, cli.seed)?;
            let n = episodes.unwrap_or(cfg.train.demo_episodes);
            let d = commands::cmd_gen_demos(&cfg, n, &out)?;
            println!("{} transitions from {n} episodes written to {}", d.transitions.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
