//! Command-line front end. Each command loads a [`RunConfig`], applies flag
//! overrides, writes the resolved config as `config.toml` into the output
//! directory, then runs.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::{self, TransitionBuffer};
use crate::ensemble::{self, Ensemble};
use crate::error::{Error, Result};
use crate::harness;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ugcem", version, about = "Uncertainty-guided CEM planning over a dynamics ensemble")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect random transitions, drop the forbidden region, save the dataset.
    Collect(Common),
    /// Train the ensemble on the saved dataset.
    Train(Common),
    /// Run evaluation episodes at a single β.
    Eval(Common),
    /// Run evaluation episodes for every β in the grid.
    Sweep(Common),
    /// Export the one-step uncertainty heatmap.
    Heatmap(Common),
    /// Export one recorded planning call from the divide state.
    Trace(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config; defaults apply to anything it leaves out.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed. For eval and sweep, replaces the seed list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Parallel sweep cells.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Comma-separated β values. Eval uses the first.
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    /// Keep transitions inside the forbidden region (collect only).
    #[arg(long)]
    pub no_filter: bool,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Collect(c)
            | Command::Train(c)
            | Command::Eval(c)
            | Command::Sweep(c)
            | Command::Heatmap(c)
            | Command::Trace(c) => c,
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::UnknownEnv(_) | Error::DomainInput(_) | Error::UnsupportedMode(_) => EXIT_CONFIG,
        Error::MissingArtifact(_) | Error::Format { .. } => EXIT_MISSING,
        Error::Numerical(_) | Error::AllCandidatesFlagged => EXIT_NUMERICAL,
        _ => EXIT_FAILURE,
    }
}

pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.eval.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(betas) = &common.beta {
        if betas.is_empty() {
            return Err(Error::Config("--beta needs at least one value".into()));
        }
        cfg.eval.beta = betas[0];
        cfg.eval.betas = betas.clone();
    }
    if common.no_filter {
        cfg.collect.filter = false;
    }
    // Pin the region so the echo is self-contained.
    cfg.region = Some(cfg.region());
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: &Command) -> Result<()> {
    let cfg = resolve_config(command.common())?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.toml"), cfg.to_toml())?;
    match command {
        Command::Collect(_) => cmd_collect(&cfg).map(|_| ()),
        Command::Train(_) => cmd_train(&cfg).map(|_| ()),
        Command::Eval(_) => cmd_eval(&cfg).map(|_| ()),
        Command::Sweep(_) => cmd_sweep(&cfg).map(|_| ()),
        Command::Heatmap(_) => cmd_heatmap(&cfg).map(|_| ()),
        Command::Trace(_) => cmd_trace(&cfg).map(|_| ()),
    }
}

pub fn cmd_collect(cfg: &RunConfig) -> Result<TransitionBuffer> {
    let env = cfg.env_id()?;
    let raw = data::collect_random(env, cfg.collect.steps, cfg.seed)?;
    let kept = if cfg.collect.filter {
        data::filter_region(&raw, &cfg.region())?
    } else {
        raw.clone()
    };
    println!("collected {} transitions, removed {}", raw.len(), raw.len() - kept.len());
    kept.save(cfg.dataset_path())?;
    Ok(kept)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Ensemble> {
    let buffer = TransitionBuffer::load(cfg.dataset_path())?;
    if buffer.env() != cfg.env_id()? {
        return Err(Error::Config(format!("dataset is for {}, config is for {}", buffer.env(), cfg.env)));
    }
    let (ens, history) = ensemble::train_ensemble(&buffer, &cfg.train_config(), cfg.seed)?;
    ens.save(cfg.model_path())?;
    let mut w = csv::Writer::from_path(cfg.out.join("loss_history.csv"))?;
    w.write_record(["member", "epoch", "nll"])?;
    for (m, losses) in history.iter().enumerate() {
        for (e, l) in losses.iter().enumerate() {
            w.write_record([m.to_string(), e.to_string(), l.to_string()])?;
        }
    }
    w.flush()?;
    for (m, losses) in history.iter().enumerate() {
        if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
            println!("member {m}: nll {first:.4} -> {last:.4}");
        }
    }
    Ok(ens)
}

fn load_model(cfg: &RunConfig) -> Result<Ensemble> {
    let ens = Ensemble::load(cfg.model_path())?;
    if ens.env != cfg.env_id()? {
        return Err(Error::Config(format!("model is for {}, config is for {}", ens.env, cfg.env)));
    }
    Ok(ens)
}

fn sweep_with(cfg: &RunConfig, betas: Vec<f64>) -> Result<harness::SweepResult> {
    let ens = load_model(cfg)?;
    let base = cfg.cem(cfg.eval.beta)?;
    let result = harness::run_sweep(&ens, &base, &cfg.region(), &cfg.sweep_spec(betas))?;
    result.write_results_csv(cfg.out.join("results.csv"))?;
    result.write_aggregate_csv(cfg.out.join("aggregate.csv"))?;
    for a in &result.aggregates {
        println!(
            "beta {}: return {:.2} ± {:.2}, cost {:.2} ± {:.2}",
            a.beta, a.mean_return, a.std_return, a.mean_cost, a.std_cost
        );
    }
    Ok(result)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<harness::SweepResult> {
    sweep_with(cfg, vec![cfg.eval.beta])
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<harness::SweepResult> {
    sweep_with(cfg, cfg.eval.betas.clone())
}

pub fn cmd_heatmap(cfg: &RunConfig) -> Result<harness::Heatmap> {
    let ens = load_model(cfg)?;
    let particles = cfg.planner.particles;
    let map = harness::uncertainty_heatmap(&ens, &cfg.grid()?, cfg.heatmap.n_actions, particles, cfg.seed)?;
    map.write_csv(cfg.out.join("heatmap.csv"))?;
    Ok(map)
}

pub fn cmd_trace(cfg: &RunConfig) -> Result<crate::planner::PlanTrace> {
    let ens = load_model(cfg)?;
    let start = cfg.trace.start.clone().unwrap_or_else(|| harness::divide_state(&cfg.region()));
    let trace = harness::plan_trace_experiment(&ens, &start, &cfg.trace_cem()?, cfg.seed, &cfg.out)?;
    for (i, it) in trace.iterations.iter().enumerate() {
        println!("iteration {i}: mean omega {:.4}, state spread {:.4e}", it.mean_omega(), it.state_spread);
    }
    Ok(trace)
}
