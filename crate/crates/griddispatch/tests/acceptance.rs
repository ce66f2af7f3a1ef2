//! End-to-end acceptance run: one pass/fail line per criterion.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use griddispatch::bench;
use griddispatch::commands::{
    cmd_compare, cmd_evaluate, cmd_gen_demos, cmd_gen_signal, cmd_powerflow, cmd_solve_opf, cmd_train, solve_opf,
    FlowMethod, CHECKPOINT_FILE, METRICS_FILE,
};
use griddispatch::config::{Mode, Provenance, RunConfig};
use griddispatch::experiment::{evaluate_expert, evaluate_policy, Experiment};
use griddispatch::feeder_io::feeder13;
use griddispatch_core::bess::BatterySpec;
use griddispatch_core::env::Transition;
use griddispatch_core::expert::{build_with_layout, solve_dispatch, DispatchProblem};
use griddispatch_core::grid::{solve_linear, solve_nonlinear_sweep, InjectionSet};
use griddispatch_core::learn::{GaussianPolicy, Mlp, ReplayBuffer};
use griddispatch_core::lp::{solve_lp, LpStatus};
use griddispatch_core::market::MarketParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_fleet(rng: &mut ChaCha8Rng, m: usize) -> Vec<BatterySpec> {
    let all = bench::fleet(10);
    (0..m)
        .map(|i| BatterySpec {
            id: format!("b{i}"),
            initial_soc: rng.random_range(0.2..0.8),
            priority: rng.random_range(0.1..1.0),
            ..all[rng.random_range(0..all.len())].clone()
        })
        .collect()
}

fn random_problem<'a>(
    rng: &mut ChaCha8Rng,
    feeder: &'a griddispatch_core::Feeder,
    fleet: &'a [BatterySpec],
    h: usize,
) -> DispatchProblem<'a> {
    let rating: f64 = fleet.iter().map(|b| b.power_kw).sum();
    let capacity = 8.0 * fleet.len() as f64;
    DispatchProblem {
        feeder,
        fleet,
        energy_kwh: fleet.iter().map(BatterySpec::initial_energy).collect(),
        start_step: 0,
        step_hours: rng.random_range(4.0..600.0) / 3600.0,
        targets_kw: (0..h).map(|_| rng.random_range(-1.0..1.0) * rating).collect(),
        prices: (0..h).map(|_| rng.random_range(0.0..60.0)).collect(),
        market: MarketParams {
            tolerance_kw: rng.random_range(0.0..2.0),
            ..MarketParams::with_capacity(capacity, 10.0 * fleet.len() as f64)
        },
        previous_performance: 1.0,
    }
}

/// Best objective over every sign pattern, each solved as a plain LP.
fn sign_enumeration(dp: &DispatchProblem) -> Option<f64> {
    let (lp, layout) = build_with_layout(dp).ok()?;
    let pairs = layout.pairs();
    let mut best: Option<f64> = None;
    for mask in 0..(1u32 << pairs.len()) {
        let mut q = lp.clone();
        for (k, pair) in pairs.iter().enumerate() {
            let off = if mask & (1 << k) != 0 { pair.plus } else { pair.minus };
            q.set_bounds(off, 0.0, 0.0);
        }
        let sol = solve_lp(&q).ok()?;
        if sol.is_optimal() {
            best = Some(best.map_or(sol.objective, |b: f64| b.max(sol.objective)));
        }
    }
    best
}

fn milp_oracle() -> Outcome {
    let started = Instant::now();
    let feeder = feeder13();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut mismatches, mut feasible) = (0.0f64, 0, 0);
    let instances = 200;
    for _ in 0..instances {
        let m = rng.random_range(1..=3);
        let h = rng.random_range(1..=3);
        let fleet = random_fleet(&mut rng, m);
        let dp = random_problem(&mut rng, &feeder, &fleet, h);
        let sched = solve_dispatch(&dp).expect("dispatch solves");
        match sign_enumeration(&dp) {
            Some(best) => {
                feasible += 1;
                if sched.status == LpStatus::Optimal {
                    worst = worst.max((sched.objective - best).abs());
                } else {
                    mismatches += 1;
                }
            }
            None => mismatches += usize::from(sched.status == LpStatus::Optimal),
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && worst <= 1e-6 && secs < 120.0,
        format!("{instances} instances ({feasible} feasible), max |objective gap| {worst:.2e}, {mismatches} status mismatches, {secs:.1} s"),
    )
}

fn power_flow_fidelity() -> Outcome {
    let base = feeder13();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spots: Vec<(usize, griddispatch_core::Phase)> = base
        .nodes()
        .iter()
        .enumerate()
        .skip(1)
        .flat_map(|(j, n)| n.phases.iter().map(move |p| (j, p)))
        .collect();
    let mut worst = 0.0f64;
    let mut max_loading = 0.0f64;
    for _ in 0..100 {
        let loading = rng.random_range(0.0..=0.5);
        max_loading = max_loading.max(loading);
        let f = base.with_scaled_loads(loading);
        let mut inj = InjectionSet::new();
        for _ in 0..rng.random_range(1..=6) {
            let (j, p) = spots[rng.random_range(0..spots.len())];
            inj.push(j, p, rng.random_range(-0.02..0.02), rng.random_range(-0.01..0.01));
        }
        let lin = solve_linear(&f, &inj).expect("linear flow");
        let nl = solve_nonlinear_sweep(&f, &inj, 1e-10, 200).expect("sweep converges");
        for ((_, _, a), (_, _, b)) in lin.voltages().zip(nl.voltages()) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        worst <= 5e-3,
        format!("100 injection sets at up to {:.0}% loading, max |V| gap {worst:.2e} pu", 100.0 * max_loading),
    )
}

fn expert_safety(expert_violations: f64) -> Outcome {
    let cfg = bench::config(Mode::Milp, 0);
    let exp = Experiment::new(&cfg).expect("benchmark");
    let feeder = &exp.env_config.feeder;
    let fleet = &exp.env_config.fleet;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut optimal, mut violations) = (0, 0);
    for _ in 0..200 {
        let h = rng.random_range(1..=4);
        let start = rng.random_range(0..exp.eval_scenario.len() - h);
        let o = solve_opf(feeder, fleet, &cfg, &exp.eval_scenario, start, h).expect("dispatch solves");
        if o.schedule.status == LpStatus::Optimal {
            optimal += 1;
            violations += o.violations;
        }
    }
    outcome(
        optimal > 0 && violations == 0 && expert_violations == 0.0,
        format!(
            "{optimal} optimal schedules re-simulated with {violations} violations; receding-horizon rollouts {expert_violations} violations/step"
        ),
    )
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

fn numeric_gradient(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let keep = x[i];
            x[i] = keep + h;
            let up = f(x);
            x[i] = keep - h;
            let down = f(x);
            x[i] = keep;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn gradient_suite() -> Outcome {
    let env = Experiment::new(&bench::config(Mode::Csac, 0)).expect("benchmark").train_env().expect("env");
    let (obs, act) = (env.observation_len(), env.action_len());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let batch = 3;
    let mut rand_vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    // critic Q(s, a) and value V(s)
    for input in [obs + act, obs] {
        let sizes = [input, 64, 32, 1];
        let net = Mlp::new(&sizes, &mut ChaCha8Rng::seed_from_u64(input as u64)).unwrap();
        let x = rand_vec(batch * input);
        let w = rand_vec(batch);
        let loss = |n: &Mlp| -> f64 {
            let t = n.forward_batch(&x, batch).unwrap();
            t.output().iter().zip(&w).map(|(o, w)| o * w).sum()
        };
        let tape = net.forward_batch(&x, batch).unwrap();
        let mut grad = vec![0.0; net.num_params()];
        net.backward(&tape, &w, &mut grad).unwrap();
        let mut p = net.params().to_vec();
        let numeric = numeric_gradient(&mut p, |p| loss(&Mlp::from_parts(sizes.to_vec(), p.to_vec()).unwrap()));
        worst = worst.max(relative_error(&grad, &numeric));
    }
    // tanh-Gaussian policy, through actions and log-probabilities
    let pol = GaussianPolicy::new(obs, &[64, 32], act, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let x = rand_vec(batch * obs);
    let w_act = rand_vec(batch * act);
    let w_lp = rand_vec(batch);
    let loss = |p: &GaussianPolicy| -> f64 {
        let s = p.sample_batch(&x, batch, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let a: f64 = s.actions.iter().zip(&w_act).map(|(x, w)| x * w).sum();
        a + s.log_prob.iter().zip(&w_lp).map(|(x, w)| x * w).sum::<f64>()
    };
    let sample = pol.sample_batch(&x, batch, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let mut grad = vec![0.0; pol.net.num_params()];
    pol.backward(&sample, &w_act, &w_lp, &mut grad).unwrap();
    let sizes = pol.net.sizes().to_vec();
    let mut p = pol.net.params().to_vec();
    let numeric = numeric_gradient(&mut p, |p| {
        loss(&GaussianPolicy::from_net(Mlp::from_parts(sizes.clone(), p.to_vec()).unwrap()).unwrap())
    });
    worst = worst.max(relative_error(&grad, &numeric));
    outcome(
        worst < 1e-4,
        format!("Q [{}, 64, 32, 1], V [{obs}, 64, 32, 1], policy [{obs}, 64, 32, {}]: max relative error {worst:.2e}", obs + act, 2 * act),
    )
}

fn sqil_discipline(demos: Vec<Transition>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut buf = ReplayBuffer::with_demonstrations(100_000, demos.clone());
    // agent transitions carry their environment reward, which replay must zero
    for (k, t) in demos.iter().enumerate() {
        buf.push(Transition {
            reward: 3.0 + k as f64,
            demo: false,
            ..t.clone()
        });
    }
    let batch = 256;
    let mut bad = 0;
    for _ in 0..10_000 {
        let b = buf.sample(batch, &mut rng).expect("sample");
        let demo = b.demo.iter().filter(|&&d| d).count();
        let rewards_ok = b.demo.iter().zip(&b.rewards).all(|(&d, &r)| r == if d { 1.0 } else { 0.0 });
        if demo != batch / 2 || !rewards_ok {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("10000 batches of {batch}, {bad} not split 50/50 with rewards 1/0"))
}

struct SeedResult {
    seed: u64,
    sqil_episodes: Option<usize>,
    csac_episodes: Option<usize>,
    sqil_profit: f64,
    csac_profit: f64,
    sqil_violations: f64,
    csac_violations: f64,
}

struct Benchmark {
    expert_validation: f64,
    expert_test: f64,
    expert_violations: f64,
    seeds: Vec<SeedResult>,
    seconds: f64,
}

fn train_and_evaluate(mode: Mode, seed: u64, root: &Path, threshold: f64) -> (Option<usize>, f64, f64) {
    let mut cfg = bench::config(mode, seed);
    cfg.run.output_dir = root.join(format!("{mode}-{seed}"));
    let t = cmd_train(&cfg, &Provenance::default()).expect("training");
    let reached = t.artifact.episodes_to_reach(threshold).map(|e| e + 1);
    let e = cmd_evaluate(&cfg, Some(&t.out_dir.join(CHECKPOINT_FILE)), &t.out_dir).expect("evaluation");
    let r = &e.evaluation.report;
    eprintln!(
        "  {mode} seed {seed}: threshold reached after {reached:?} episodes, test profit {:.4}, {:.4} violations/step",
        r.profit, r.violations
    );
    (reached, r.profit, r.violations)
}

fn benchmark(root: &Path) -> Benchmark {
    let started = Instant::now();
    let cfg = bench::config(Mode::Milp, 0);
    let exp = Experiment::new(&cfg).expect("benchmark");
    let val = evaluate_expert(&mut exp.eval_env().unwrap(), &exp.validation_offsets()).expect("expert");
    let test = cmd_evaluate(&cfg, None, &root.join("milp")).expect("expert");
    let threshold = 0.9 * val.report.profit;
    eprintln!(
        "  expert validation profit {:.4}, threshold {threshold:.4}, test profit {:.4}",
        val.report.profit, test.evaluation.report.profit
    );
    let seeds = SEEDS
        .iter()
        .map(|&seed| {
            let (sqil_episodes, sqil_profit, sqil_violations) =
                train_and_evaluate(Mode::CsacSqil, seed, root, threshold);
            let (csac_episodes, csac_profit, csac_violations) = train_and_evaluate(Mode::Csac, seed, root, threshold);
            SeedResult {
                seed,
                sqil_episodes,
                csac_episodes,
                sqil_profit,
                csac_profit,
                sqil_violations,
                csac_violations,
            }
        })
        .collect();
    Benchmark {
        expert_validation: val.report.profit,
        expert_test: test.evaluation.report.profit,
        expert_violations: test.evaluation.report.violations.max(val.report.violations),
        seeds,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn training_efficiency(b: &Benchmark) -> Outcome {
    // runs that never reach the threshold count as their full budget
    let sqil = median(
        b.seeds.iter().map(|s| s.sqil_episodes.unwrap_or(bench::SQIL_EPISODES) as f64).collect(),
    );
    let csac = median(
        b.seeds.iter().map(|s| s.csac_episodes.unwrap_or(bench::CSAC_EPISODES) as f64).collect(),
    );
    let fmt = |v: Vec<Option<usize>>, budget: usize| -> String {
        v.iter()
            .map(|e| e.map_or(format!(">{budget}"), |e| e.to_string()))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        sqil <= 0.5 * csac && b.seconds < 3600.0,
        format!(
            "median episodes to 90% of expert profit ({:.4}): csac-sqil {sqil} [{}], csac {csac} [{}]; {:.1} min",
            0.9 * b.expert_validation,
            fmt(b.seeds.iter().map(|s| s.sqil_episodes).collect(), bench::SQIL_EPISODES),
            fmt(b.seeds.iter().map(|s| s.csac_episodes).collect(), bench::CSAC_EPISODES),
            b.seconds / 60.0
        ),
    )
}

fn result_ordering(b: &Benchmark) -> Outcome {
    let expert_sqil = b.seeds.iter().filter(|s| b.expert_test >= s.sqil_profit).count();
    let sqil_csac = b.seeds.iter().filter(|s| s.sqil_profit >= s.csac_profit).count();
    let violations = b.seeds.iter().filter(|s| s.sqil_violations <= s.csac_violations).count();
    let rows: Vec<String> = b
        .seeds
        .iter()
        .map(|s| {
            format!(
                "seed {}: {:.4}/{:.4} ({:.4}/{:.4} viol)",
                s.seed, s.sqil_profit, s.csac_profit, s.sqil_violations, s.csac_violations
            )
        })
        .collect();
    outcome(
        expert_sqil >= 4 && sqil_csac >= 4 && violations >= 4,
        format!(
            "milp {:.4} >= csac-sqil in {expert_sqil}/5, csac-sqil >= csac in {sqil_csac}/5, violations csac-sqil <= csac in {violations}/5; csac-sqil/csac {}",
            b.expert_test,
            rows.join(", ")
        ),
    )
}

fn inference_speed(root: &Path) -> Outcome {
    let mut cfg = bench::config(Mode::CsacSqil, 0);
    cfg.fleet.count = 10;
    cfg.train.episodes = 20;
    cfg.train.demo_episodes = 5;
    cfg.run.output_dir = root.join("ten");
    let t = cmd_train(&cfg, &Provenance::default()).expect("training");
    let exp = Experiment::new(&cfg).expect("benchmark");
    let offsets = exp.test_offsets();
    let policy = evaluate_policy(&t.artifact.agent, &mut exp.eval_env().unwrap(), &offsets).expect("policy");
    let expert = evaluate_expert(&mut exp.eval_env().unwrap(), &offsets).expect("expert");
    let ratio = policy.mean_decision_seconds / expert.mean_decision_seconds;
    outcome(
        ratio <= 0.1,
        format!(
            "10 batteries: policy {:.2e} s, MILP {:.2e} s per step, ratio {ratio:.1e}",
            policy.mean_decision_seconds, expert.mean_decision_seconds
        ),
    )
}

fn determinism(root: &Path) -> Outcome {
    let run = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        for mode in [Mode::CsacSqil, Mode::Csac] {
            let mut cfg: RunConfig = bench::config(mode, 11);
            cfg.train.episodes = 30;
            cfg.train.demo_episodes = 5;
            cfg.scenario.eval_episodes = 2;
            cfg.run.output_dir = dir.join(mode.as_str());
            cmd_train(&cfg, &Provenance::default()).expect("training");
            cmd_evaluate(&cfg, Some(&cfg.run.output_dir.join(CHECKPOINT_FILE)), &cfg.run.output_dir).expect("evaluation");
            if mode == Mode::CsacSqil {
                cmd_gen_demos(&cfg, 2, &dir.join("demos.json")).expect("demos");
                let sc = cmd_gen_signal(11, 200, 4.0, &dir.join("signal.csv")).expect("signal");
                cmd_solve_opf(&cfg, &sc, 5, 3, &dir.join("opf")).expect("solve");
                let inj = "node,phase,p_pu,q_pu\n675,a,0.01,0.0\n634,b,-0.01,0.005\n";
                cmd_powerflow(&feeder13(), inj, FlowMethod::Sweep, &dir.join("voltages.csv")).expect("powerflow");
            }
        }
        let runs: Vec<PathBuf> = [Mode::CsacSqil, Mode::Csac].iter().map(|m| dir.join(m.as_str())).collect();
        cmd_compare(&runs, &dir.join("compare")).expect("compare");
        let mut names = vec![
            "demos.json".to_string(),
            "signal.csv".into(),
            "opf/schedule.csv".into(),
            "opf/summary.csv".into(),
            "voltages.csv".into(),
            "compare/comparison.csv".into(),
        ];
        for m in ["csac-sqil", "csac"] {
            for f in [METRICS_FILE, "evaluation.csv", "trajectory.csv", CHECKPOINT_FILE, "reward_curve.svg"] {
                names.push(format!("{m}/{f}"));
            }
        }
        for n in names {
            let bytes = std::fs::read(dir.join(&n)).expect("output file");
            files.push((n, bytes));
        }
        files
    };
    let a = run(&root.join("a"));
    let b = run(&root.join("b"));
    let differing: Vec<&str> = a.iter().zip(&b).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    outcome(
        differing.is_empty(),
        format!("{} files from two identical runs, differing: {differing:?}", a.len()),
    )
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().expect("temporary directory");
    let exp = Experiment::new(&bench::config(Mode::CsacSqil, 0)).expect("benchmark");
    let demos = exp.demonstrations(20, 0).expect("demonstrations");
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 milp oracle equivalence", milp_oracle()),
        ("2 power-flow fidelity", power_flow_fidelity()),
        ("4 gradient suite", gradient_suite()),
        ("5 sqil sample discipline", sqil_discipline(demos)),
        ("8 inference speed", inference_speed(root.path())),
        ("9 determinism", determinism(root.path())),
    ];
    let b = benchmark(root.path());
    results.push(("3 expert safety", expert_safety(b.expert_violations)));
    results.push(("6 training efficiency", training_efficiency(&b)));
    results.push(("7 result ordering", result_ordering(&b)));
    results.sort_by_key(|r| r.0);
    let mut all = true;
    for (name, o) in &results {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        all &= o.pass;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
