//! Run configuration, read from TOML. Every field is optional and falls back
//! to the default hyperparameters; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::TrainConfig;
use crate::env::{EnvId, RegionSpec, DEFAULT_EPISODE_STEPS};
use crate::error::{Error, Result};
use crate::harness::{GridSpec, SweepSpec};
use crate::nn::AdamConfig;
use crate::planner::{CemConfig, Propagation, UncertaintyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: String,
    pub seed: u64,
    pub out: PathBuf,
    /// Defaults to `<out>/dataset.txt`.
    pub dataset: Option<PathBuf>,
    /// Defaults to `<out>/ensemble.txt`.
    pub model: Option<PathBuf>,
    pub workers: usize,
    /// Defaults to the environment's forbidden region.
    pub region: Option<RegionSpec>,
    pub collect: CollectSection,
    pub train: TrainSection,
    pub planner: PlannerSection,
    pub eval: EvalSection,
    pub heatmap: HeatmapSection,
    pub trace: TraceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectSection {
    pub steps: usize,
    pub filter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub hidden: Vec<usize>,
    pub ensemble_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub horizon: usize,
    pub iterations: usize,
    pub elite_ratio: f64,
    pub population: usize,
    pub particles: usize,
    pub alpha: f64,
    pub propagation: Propagation,
    pub uncertainty: UncertaintyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Used by `eval`.
    pub beta: f64,
    /// Used by `sweep`.
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapSection {
    /// State indices for the two grid axes; environment default if unset.
    pub dims: Option<[usize; 2]>,
    pub range1: Option<[f64; 2]>,
    pub range2: Option<[f64; 2]>,
    pub resolution: [usize; 2],
    pub base: Option<Vec<f64>>,
    pub n_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    pub horizon: usize,
    pub beta: f64,
    /// Defaults to the divide state on the region boundary.
    pub start: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: "cartpole".into(),
            seed: 0,
            out: PathBuf::from("runs/cartpole"),
            dataset: None,
            model: None,
            workers: 1,
            region: None,
            collect: CollectSection::default(),
            train: TrainSection::default(),
            planner: PlannerSection::default(),
            eval: EvalSection::default(),
            heatmap: HeatmapSection::default(),
            trace: TraceSection::default(),
        }
    }
}

impl Default for CollectSection {
    fn default() -> Self {
        CollectSection { steps: 10_000, filter: true }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            hidden: t.hidden,
            ensemble_size: t.ensemble_size,
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.adam.lr,
            weight_decay: t.adam.weight_decay,
        }
    }
}

impl Default for PlannerSection {
    fn default() -> Self {
        let c = CemConfig::for_env(EnvId::Cartpole);
        PlannerSection {
            horizon: c.horizon,
            iterations: c.iterations,
            elite_ratio: c.elite_ratio,
            population: c.population,
            particles: c.particles,
            alpha: c.alpha,
            propagation: c.propagation,
            uncertainty: c.uncertainty,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        let s = SweepSpec::default();
        EvalSection {
            beta: 0.0,
            betas: s.betas,
            seeds: s.seeds,
            episodes: s.episodes,
            max_steps: DEFAULT_EPISODE_STEPS,
        }
    }
}

impl Default for HeatmapSection {
    fn default() -> Self {
        HeatmapSection { dims: None, range1: None, range2: None, resolution: [25, 25], base: None, n_actions: 200 }
    }
}

impl Default for TraceSection {
    fn default() -> Self {
        TraceSection { horizon: 5, beta: 1.0, start: None }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
            _ => Error::Io(e),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn env_id(&self) -> Result<EnvId> {
        self.env.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let env = self.env_id()?;
        if self.region().env() != env {
            return Err(Error::Config(format!("region is for {}, env is {env}", self.region().env())));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.train.hidden.is_empty() || self.train.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.eval.betas.is_empty() || self.eval.seeds.is_empty() || self.eval.episodes == 0 {
            return Err(Error::Config("eval needs betas, seeds and at least one episode".into()));
        }
        self.cem(self.eval.beta)?.validate()?;
        self.trace_cem()?.validate()
    }

    pub fn region(&self) -> RegionSpec {
        match (self.region, self.env_id()) {
            (Some(r), _) => r,
            (None, Ok(env)) => env.default_region(),
            (None, Err(_)) => RegionSpec::cartpole_default(),
        }
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out.join("dataset.txt"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("ensemble.txt"))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hidden: self.train.hidden.clone(),
            ensemble_size: self.train.ensemble_size,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            adam: AdamConfig {
                lr: self.train.learning_rate,
                weight_decay: self.train.weight_decay,
                ..AdamConfig::default()
            },
        }
    }

    pub fn cem(&self, beta: f64) -> Result<CemConfig> {
        let p = &self.planner;
        Ok(CemConfig {
            horizon: p.horizon,
            iterations: p.iterations,
            elite_ratio: p.elite_ratio,
            population: p.population,
            particles: p.particles,
            alpha: p.alpha,
            beta,
            propagation: p.propagation,
            uncertainty: p.uncertainty,
            ..CemConfig::for_env(self.env_id()?)
        })
    }

    pub fn trace_cem(&self) -> Result<CemConfig> {
        Ok(CemConfig { horizon: self.trace.horizon, ..self.cem(self.trace.beta)? })
    }

    pub fn sweep_spec(&self, betas: Vec<f64>) -> SweepSpec {
        SweepSpec {
            betas,
            seeds: self.eval.seeds.clone(),
            episodes: self.eval.episodes,
            max_steps: self.eval.max_steps,
            workers: self.workers,
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let env = self.env_id()?;
        let default = match env {
            EnvId::Cartpole => GridSpec::cartpole_default(),
            EnvId::Pendulum => GridSpec::pendulum_default(),
        };
        let h = &self.heatmap;
        Ok(GridSpec {
            dims: h.dims.map(|d| (d[0], d[1])).unwrap_or(default.dims),
            range1: h.range1.map(|r| (r[0], r[1])).unwrap_or(default.range1),
            range2: h.range2.map(|r| (r[0], r[1])).unwrap_or(default.range2),
            resolution: (h.resolution[0], h.resolution[1]),
            base: h.base.clone().unwrap_or(default.base),
        })
    }
}
