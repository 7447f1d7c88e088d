use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ugcem::config::RunConfig;
use ugcem::ensemble::Ensemble;
use ugcem::env::{RegionSpec, DEFAULT_EPISODE_STEPS};

const TINY: &str = r#"
env = "cartpole"
seed = 3

[collect]
steps = 600

[train]
hidden = [16, 16]
epochs = 3

[planner]
horizon = 3
iterations = 2
population = 12
particles = 4

[eval]
seeds = [0]
episodes = 1
max_steps = 5

[heatmap]
resolution = [3, 3]
n_actions = 20
"#;

fn ugcem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ugcem")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = ugcem(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Workspace {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("tiny.toml");
        fs::write(&config, format!("{TINY}\n{extra}")).unwrap();
        Workspace { _dir: dir, root, config }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn cmd(&self, command: &str, out: &Path, extra: &[&str]) -> String {
        let mut args = vec![command, "--config", self.config.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        run_ok(&args)
    }
}

#[test]
fn collect_writes_header_and_is_deterministic() {
    let ws = Workspace::new("");
    let a = ws.out("a");
    let b = ws.out("b");
    let stdout = ws.cmd("collect", &a, &[]);
    assert!(stdout.contains("collected 600 transitions"));
    ws.cmd("collect", &b, &[]);
    let bytes = fs::read(a.join("dataset.txt")).unwrap();
    assert_eq!(bytes, fs::read(b.join("dataset.txt")).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.contains("obs_dim=4") && header.contains("act_dim=1"), "{header}");

    let raw = ws.out("raw");
    let stdout = ws.cmd("collect", &raw, &["--no-filter"]);
    assert!(stdout.contains("removed 0"), "{stdout}");
}

#[test]
fn config_echo_reproduces_outputs() {
    let ws = Workspace::new("");
    let a = ws.out("a");
    ws.cmd("collect", &a, &["--seed", "11"]);
    let echo = a.join("config.toml");
    let echoed = RunConfig::load(&echo).unwrap();
    assert_eq!(echoed.seed, 11);
    assert_eq!(echoed.out, a);

    let b = ws.out("b");
    run_ok(&["collect", "--config", echo.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(fs::read(a.join("dataset.txt")).unwrap(), fs::read(b.join("dataset.txt")).unwrap());
}

#[test]
fn full_pipeline() {
    let ws = Workspace::new("");
    let run = ws.out("run");
    ws.cmd("collect", &run, &[]);
    ws.cmd("train", &run, &[]);

    let loss = fs::read_to_string(run.join("loss_history.csv")).unwrap();
    assert_eq!(loss.lines().next().unwrap(), "member,epoch,nll");
    assert_eq!(loss.lines().count(), 1 + 4 * 3);

    // Same seed, same checkpoint bytes.
    let again = ws.out("again");
    ws.cmd("collect", &again, &[]);
    ws.cmd("train", &again, &[]);
    let ckpt = fs::read(run.join("ensemble.txt")).unwrap();
    assert_eq!(ckpt, fs::read(again.join("ensemble.txt")).unwrap());
    let ens = Ensemble::load(run.join("ensemble.txt")).unwrap();
    assert_eq!(ens.members.len(), 4);

    ws.cmd("sweep", &run, &[]);
    let agg = fs::read_to_string(run.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().next().unwrap(), "env,beta,mean_return,std_return,mean_cost,std_cost");
    assert_eq!(agg.lines().count(), 1 + 5);
    let sweep_results = fs::read_to_string(run.join("results.csv")).unwrap();
    assert_eq!(sweep_results.lines().next().unwrap(), "env,beta,seed,episode,return,cost");

    // A single-β eval reproduces the matching sweep cells.
    let eval = ws.out("eval");
    fs::create_dir_all(&eval).unwrap();
    fs::copy(run.join("ensemble.txt"), eval.join("ensemble.txt")).unwrap();
    ws.cmd("eval", &eval, &["--beta", "0"]);
    let eval_rows: Vec<String> = fs::read_to_string(eval.join("results.csv")).unwrap().lines().skip(1).map(String::from).collect();
    let sweep_rows: Vec<String> = sweep_results.lines().filter(|l| l.starts_with("cartpole,0,")).map(String::from).collect();
    assert_eq!(eval_rows, sweep_rows);

    ws.cmd("heatmap", &run, &[]);
    let heat = fs::read_to_string(run.join("heatmap.csv")).unwrap();
    assert_eq!(heat.lines().next().unwrap(), "dim1,dim2,omega");
    assert_eq!(heat.lines().count(), 1 + 9);

    let stdout = ws.cmd("trace", &run, &[]);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("iteration")).count(), 2);
    let scores = fs::read_to_string(run.join("trace_scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 2 * 12);
    assert!(run.join("trace_states.csv").exists());
}

#[test]
fn workers_do_not_change_sweep_results() {
    let ws = Workspace::new("");
    let run = ws.out("run");
    ws.cmd("collect", &run, &[]);
    ws.cmd("train", &run, &[]);
    ws.cmd("sweep", &run, &["--workers", "1", "--beta", "0,2"]);
    let one = fs::read(run.join("results.csv")).unwrap();
    ws.cmd("sweep", &run, &["--workers", "4", "--beta", "0,2"]);
    assert_eq!(one, fs::read(run.join("results.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let ws = Workspace::new("");
    let dir = ws.out("x");
    let out = dir.to_str().unwrap();

    let bad = ws.root.join("bad.toml");
    fs::write(&bad, "[planner]\nhorizn = 4\n").unwrap();
    assert_eq!(ugcem(&["collect", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    fs::write(&bad, "env = \"acrobot\"\n").unwrap();
    assert_eq!(ugcem(&["collect", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    assert_eq!(ugcem(&["collect", "--bogus"]).status.code(), Some(2));
    assert_eq!(ugcem(&["collect", "--config", "/nonexistent.toml"]).status.code(), Some(2));

    let cfg = ws.config.to_str().unwrap();
    assert_eq!(ugcem(&["train", "--config", cfg, "--out", out]).status.code(), Some(3));
    assert_eq!(ugcem(&["sweep", "--config", cfg, "--out", out]).status.code(), Some(3));
    assert_eq!(ugcem(&["heatmap", "--config", cfg, "--out", out]).status.code(), Some(3));
}

#[test]
fn shipped_presets() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let cart = RunConfig::load(root.join("cartpole.toml")).unwrap();
    assert_eq!(cart.region(), RegionSpec::cartpole_default());
    assert_eq!(cart.eval.betas, vec![0.0, 0.5, 1.0, 2.0, 5.0]);

    let pend = RunConfig::load(root.join("pendulum.toml")).unwrap();
    assert_eq!(pend.region(), RegionSpec::pendulum_default());
    assert_eq!(pend.eval.max_steps, DEFAULT_EPISODE_STEPS);
    assert_eq!(pend.cem(0.0).unwrap().action_high, 2.0);

    let template = RunConfig::load(root.join("default.toml")).unwrap();
    assert_eq!(template, RunConfig::default());
}
