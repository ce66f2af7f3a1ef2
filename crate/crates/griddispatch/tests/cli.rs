use std::path::Path;
use std::process::{Command, Output};

fn griddispatch(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_griddispatch"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("GRIDDISPATCH_RUN_SEED")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"
[run]
mode = "csac"
seed = 4

[fleet]
count = 2

[scenario]
steps = 400
eval_episodes = 1

[env]
episode_steps = 12

[agent]
hidden = [8]
batch_size = 16

[train]
episodes = 3
warmup_steps = 12
eval_every = 2
"#;

#[test]
fn help_lists_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let o = griddispatch(&["--help"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for sub in ["train", "evaluate", "compare", "solve-opf", "powerflow", "gen-signal", "gen-demos"] {
        assert!(text.contains(sub), "{sub} missing from:\n{text}");
    }
}

#[test]
fn gen_signal_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, name) in [("3", "a.csv"), ("3", "b.csv"), ("4", "c.csv")] {
        let o = griddispatch(&["--seed", seed, "gen-signal", "--steps", "50", "--out", name], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
    assert!(read("a.csv").starts_with(b"t,r,price\n"));
}

#[test]
fn train_evaluate_compare() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), TINY).unwrap();
    let o = griddispatch(&["train", "--config", "run.toml", "--out", "csac"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("csac/metrics.csv").is_file());
    let o = griddispatch(
        &["evaluate", "--config", "run.toml", "--checkpoint", "csac/checkpoint.json", "--out", "csac"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let milp = TINY.replace("mode = \"csac\"", "mode = \"milp\"");
    std::fs::write(dir.path().join("milp.toml"), milp).unwrap();
    let o = griddispatch(&["evaluate", "--config", "milp.toml", "--out", "milp"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = griddispatch(&["compare", "milp", "csac", "--out", "cmp"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("| milp |"));
}

#[test]
fn errors_exit_nonzero_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let milp = TINY.replace("mode = \"csac\"", "mode = \"milp\"");
    std::fs::write(dir.path().join("run.toml"), milp).unwrap();
    let o = griddispatch(&["train", "--config", "run.toml"], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("run.toml:3: run.mode:"), "{err}");

    std::fs::write(dir.path().join("bad.toml"), "[agent]\ngamma = 2.0\n").unwrap();
    let o = griddispatch(&["train", "--config", "bad.toml"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bad.toml:2: agent.gamma:"), "{}", stderr(&o));

    let o = griddispatch(&["train", "--config", "absent.toml"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("absent.toml"));
}

#[test]
fn powerflow_and_solve_opf() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("inj.csv"), "node,phase,p_pu,q_pu\n675,b,0.02,0.0\n").unwrap();
    let o = griddispatch(&["powerflow", "--injections", "inj.csv", "--method", "sweep", "--out", "v.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read(dir.path().join("v.csv")).unwrap().starts_with(b"node,phase,v_mag_pu\n"));

    std::fs::write(dir.path().join("run.toml"), TINY).unwrap();
    let o = griddispatch(&["gen-signal", "--steps", "20", "--out", "s.csv"], dir.path());
    assert!(o.status.success());
    let o = griddispatch(
        &["solve-opf", "--config", "run.toml", "--scenario", "s.csv", "--start", "2", "--horizon", "3", "--out", "opf"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let schedule = std::fs::read_to_string(dir.path().join("opf/schedule.csv")).unwrap();
    assert_eq!(schedule.lines().count(), 1 + 3 * 2);
}
