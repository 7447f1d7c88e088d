//! Offline evaluation: MPC episodes on the true environment with a frozen
//! ensemble, β sweeps, the state-space uncertainty heatmap and plan traces.

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::ensemble::Ensemble;
use crate::env::{EnvId, RegionSpec, DEFAULT_EPISODE_STEPS};
use crate::error::{Error, Result};
use crate::planner::{
    self, CemConfig, PlanOptions, PlanTrace, PlanningDistribution, Propagation, VarianceNormalizer,
};
use crate::seed;

const RESET_STREAM: u64 = 0xE915;
const PLAN_STREAM: u64 = 0x9A11;
const HEATMAP_STREAM: u64 = 0x4EA7;
const TRACE_STREAM: u64 = 0x7ACE;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub env: EnvId,
    pub beta: f64,
    pub seed: u64,
    pub episode: usize,
    pub episode_return: f64,
    /// Steps whose observation lay in the forbidden region.
    pub cost: usize,
    pub trajectory: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.trajectory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty()
    }
}

/// Runs one MPC episode. The reset state depends on `(seed, episode)` only, so
/// cells that differ in β start from the same states.
pub fn run_episode(
    ensemble: &Ensemble,
    config: &CemConfig,
    region: &RegionSpec,
    seed_: u64,
    episode: usize,
    max_steps: usize,
) -> Result<EpisodeRecord> {
    let env = ensemble.env;
    if region.env() != env {
        return Err(Error::Config(format!("{} region used with {env} ensemble", region.env())));
    }
    let mut state = env.reset(&mut seed::stream(seed_, &[RESET_STREAM, episode as u64]));
    let mut rng = seed::stream(seed_, &[PLAN_STREAM, episode as u64]);
    let mut normalizer = VarianceNormalizer::new(env.obs_dim(), config.horizon);
    let mut warm: Option<PlanningDistribution> = None;
    let mut record = EpisodeRecord {
        env,
        beta: config.beta,
        seed: seed_,
        episode,
        episode_return: 0.0,
        cost: 0,
        trajectory: Vec::with_capacity(max_steps),
    };

    for _ in 0..max_steps {
        let obs = state.observe().values;
        if region.contains(&obs) {
            record.cost += 1;
        }
        let out = planner::plan(ensemble, &obs, config, &mut normalizer, &mut rng, warm.as_ref())?;
        let (reward, done) = state.step(&out.action)?;
        record.episode_return += reward;
        record.trajectory.push(StepRecord { obs, action: out.action, reward });
        warm = Some(out.dist);
        if done {
            break;
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub max_steps: usize,
    /// Parallel cells; does not affect results.
    pub workers: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            betas: vec![0.0, 0.5, 1.0, 2.0, 5.0],
            seeds: vec![0, 1, 2],
            episodes: 10,
            max_steps: DEFAULT_EPISODE_STEPS,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub beta: f64,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_cost: f64,
    pub std_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub env: EnvId,
    /// In `(beta, seed, episode)` order.
    pub records: Vec<EpisodeRecord>,
    /// One entry per β, over every episode of every seed.
    pub aggregates: Vec<Aggregate>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl SweepResult {
    pub fn cell(&self, beta: f64) -> impl Iterator<Item = &EpisodeRecord> {
        self.records.iter().filter(move |r| r.beta == beta)
    }

    pub fn aggregate(&self, beta: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.beta == beta)
    }

    /// Per-seed mean cost at `beta`, in seed order of first appearance.
    pub fn seed_mean_costs(&self, beta: f64) -> Vec<f64> {
        let mut seeds: Vec<u64> = Vec::new();
        for r in self.cell(beta) {
            if !seeds.contains(&r.seed) {
                seeds.push(r.seed);
            }
        }
        seeds
            .iter()
            .map(|&s| {
                let costs: Vec<f64> = self.cell(beta).filter(|r| r.seed == s).map(|r| r.cost as f64).collect();
                mean_std(&costs).0
            })
            .collect()
    }

    /// Population std of the per-seed mean cost at `beta`.
    pub fn seed_cost_std(&self, beta: f64) -> f64 {
        mean_std(&self.seed_mean_costs(beta)).1
    }

    pub fn recompute_aggregates(records: &[EpisodeRecord]) -> Vec<Aggregate> {
        let mut betas: Vec<f64> = Vec::new();
        for r in records {
            if !betas.contains(&r.beta) {
                betas.push(r.beta);
            }
        }
        betas
            .into_iter()
            .map(|beta| {
                let cell: Vec<&EpisodeRecord> = records.iter().filter(|r| r.beta == beta).collect();
                let returns: Vec<f64> = cell.iter().map(|r| r.episode_return).collect();
                let costs: Vec<f64> = cell.iter().map(|r| r.cost as f64).collect();
                let (mean_return, std_return) = mean_std(&returns);
                let (mean_cost, std_cost) = mean_std(&costs);
                Aggregate { beta, mean_return, std_return, mean_cost, std_cost }
            })
            .collect()
    }

    /// `env,beta,seed,episode,return,cost`.
    pub fn write_results_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["env", "beta", "seed", "episode", "return", "cost"])?;
        for r in &self.records {
            w.write_record([
                r.env.name().to_string(),
                r.beta.to_string(),
                r.seed.to_string(),
                r.episode.to_string(),
                r.episode_return.to_string(),
                r.cost.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `env,beta,mean_return,std_return,mean_cost,std_cost`.
    pub fn write_aggregate_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["env", "beta", "mean_return", "std_return", "mean_cost", "std_cost"])?;
        for a in &self.aggregates {
            w.write_record([
                self.env.name().to_string(),
                a.beta.to_string(),
                a.mean_return.to_string(),
                a.std_return.to_string(),
                a.mean_cost.to_string(),
                a.std_cost.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every `(beta, seed, episode)` cell. `base.beta` is ignored.
pub fn run_sweep(
    ensemble: &Ensemble,
    base: &CemConfig,
    region: &RegionSpec,
    spec: &SweepSpec,
) -> Result<SweepResult> {
    if spec.betas.is_empty() || spec.seeds.is_empty() || spec.episodes == 0 {
        return Err(Error::Config("sweep needs at least one beta, one seed and one episode".into()));
    }
    let cells: Vec<(f64, u64, usize)> = spec
        .betas
        .iter()
        .flat_map(|&b| spec.seeds.iter().flat_map(move |&s| (0..spec.episodes).map(move |e| (b, s, e))))
        .collect();
    let run = |&(beta, s, e): &(f64, u64, usize)| {
        let cfg = CemConfig { beta, ..base.clone() };
        run_episode(ensemble, &cfg, region, s, e, spec.max_steps)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let records = pool.install(|| cells.par_iter().map(run).collect::<Result<Vec<_>>>())?;
    let aggregates = SweepResult::recompute_aggregates(&records);
    Ok(SweepResult { env: ensemble.env, records, aggregates })
}

/// Two state dimensions swept over a grid, the rest held at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dims: (usize, usize),
    pub range1: (f64, f64),
    pub range2: (f64, f64),
    pub resolution: (usize, usize),
    pub base: Vec<f64>,
}

impl GridSpec {
    /// Cartpole `(x, θ)` grid over the span of randomly collected data,
    /// velocities zero.
    pub fn cartpole_default() -> Self {
        GridSpec {
            dims: (0, 2),
            range1: (-0.5, 0.5),
            range2: (-0.2095, 0.2095),
            resolution: (25, 25),
            base: vec![0.0; 4],
        }
    }

    /// Pendulum `(sin θ, θ̇)` grid with `cos θ` held at zero.
    pub fn pendulum_default() -> Self {
        GridSpec {
            dims: (1, 2),
            range1: (-1.0, 1.0),
            range2: (-8.0, 8.0),
            resolution: (25, 25),
            base: vec![0.0; 3],
        }
    }

    fn axis(range: (f64, f64), n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![range.0];
        }
        (0..n)
            .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub dims: (usize, usize),
    pub values1: Vec<f64>,
    pub values2: Vec<f64>,
    /// `len(values1) × len(values2)`.
    pub omega: Array2<f64>,
}

impl Heatmap {
    /// `dim1,dim2,omega`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dim1", "dim2", "omega"])?;
        for (i, a) in self.values1.iter().enumerate() {
            for (j, b) in self.values2.iter().enumerate() {
                w.write_record([a.to_string(), b.to_string(), self.omega[[i, j]].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Mean over cells whose second coordinate satisfies `pred`.
    pub fn mean_where(&self, pred: impl Fn(f64) -> bool) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (j, &b) in self.values2.iter().enumerate() {
            if pred(b) {
                for i in 0..self.values1.len() {
                    sum += self.omega[[i, j]];
                    n += 1;
                }
            }
        }
        sum / n as f64
    }
}

/// Mean `ω` of one-step rollouts at a single state, over `n_actions`
/// standard-normal actions clamped to the bounds, with `σ̄² ≡ 1`.
pub fn state_uncertainty<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    obs: &[f64],
    n_actions: usize,
    particles: usize,
    rng: &mut R,
) -> Result<f64> {
    let (low, high) = ensemble.env.action_bounds();
    let ad = ensemble.act_dim();
    let mut actions = Array3::zeros((n_actions, 1, ad));
    actions.mapv_inplace(|_: f64| rng.sample::<f64, _>(StandardNormal).clamp(low, high));
    let cfg = CemConfig {
        horizon: 1,
        particles,
        population: n_actions,
        propagation: Propagation::TsInf,
        ..CemConfig::for_env(ensemble.env)
    };
    let roll = planner::rollout(ensemble, obs, actions.view(), &cfg, rng)?;
    let identity = VarianceNormalizer::identity(ensemble.obs_dim(), 1);
    let mut total = 0.0;
    for c in 0..n_actions {
        total += planner::uncertainty(planner::particle_variance(roll.candidate_states(c)).view(), &identity)?;
    }
    Ok(total / n_actions as f64)
}

pub fn uncertainty_heatmap(
    ensemble: &Ensemble,
    grid: &GridSpec,
    n_actions: usize,
    particles: usize,
    seed_: u64,
) -> Result<Heatmap> {
    let sd = ensemble.obs_dim();
    if grid.base.len() != sd {
        return Err(Error::Dimension { expected: sd, got: grid.base.len(), context: "heatmap base state" });
    }
    if grid.dims.0 >= sd || grid.dims.1 >= sd || grid.dims.0 == grid.dims.1 {
        return Err(Error::Config("heatmap dims must be two distinct state indices".into()));
    }
    let values1 = GridSpec::axis(grid.range1, grid.resolution.0);
    let values2 = GridSpec::axis(grid.range2, grid.resolution.1);
    let cells: Vec<(usize, usize)> = (0..values1.len())
        .flat_map(|i| (0..values2.len()).map(move |j| (i, j)))
        .collect();
    let omegas = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut obs = grid.base.clone();
            obs[grid.dims.0] = values1[i];
            obs[grid.dims.1] = values2[j];
            let mut rng = seed::stream(seed_, &[HEATMAP_STREAM, i as u64, j as u64]);
            state_uncertainty(ensemble, &obs, n_actions, particles, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    let omega = Array2::from_shape_vec((values1.len(), values2.len()), omegas)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(Heatmap { dims: grid.dims, values1, values2, omega })
}

/// One recorded planning call from `start_obs`, with a fresh normalizer.
pub fn plan_trace(ensemble: &Ensemble, start_obs: &[f64], config: &CemConfig, seed_: u64) -> Result<PlanTrace> {
    let mut normalizer = VarianceNormalizer::new(ensemble.obs_dim(), config.horizon);
    let mut rng = seed::stream(seed_, &[TRACE_STREAM]);
    let out = planner::plan_with(
        ensemble,
        start_obs,
        config,
        &mut normalizer,
        &mut rng,
        None,
        PlanOptions { record_states: true, scorer: None },
    )?;
    Ok(out.trace)
}

/// Writes `trace_scores.csv` and `trace_states.csv` into `out_dir`.
pub fn plan_trace_experiment(
    ensemble: &Ensemble,
    start_obs: &[f64],
    config: &CemConfig,
    seed_: u64,
    out_dir: impl AsRef<Path>,
) -> Result<PlanTrace> {
    let trace = plan_trace(ensemble, start_obs, config, seed_)?;
    let dir = out_dir.as_ref();
    trace.write_scores_csv(dir.join("trace_scores.csv"))?;
    trace.write_states_csv(dir.join("trace_states.csv"))?;
    Ok(trace)
}

/// The divide state used for plan traces: on the region boundary, other dims zero.
pub fn divide_state(region: &RegionSpec) -> Vec<f64> {
    match *region {
        RegionSpec::Cartpole { threshold } => vec![0.0, 0.0, threshold, 0.0],
        RegionSpec::Pendulum { hi, .. } => vec![hi.cos(), hi.sin(), 0.0],
    }
}
