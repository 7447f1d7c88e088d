//! Offline transition datasets: random collection, region filtering,
//! input normalization and a line-oriented text format.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::env::{EnvId, RegionSpec, DEFAULT_EPISODE_STEPS};
use crate::error::{Error, Result};
use crate::seed;
use crate::textio::{complete_lines, header_env, header_fields, header_usize, parse_row, write_row};

pub const DEFAULT_CAPACITY: usize = 10_000;
pub const STD_FLOOR: f64 = 1e-8;
const DATASET_MAGIC: &str = "#ugcem-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub next_obs: Vec<f64>,
}

impl Transition {
    fn is_finite(&self) -> bool {
        self.obs
            .iter()
            .chain(&self.action)
            .chain(&self.next_obs)
            .all(|v| v.is_finite())
    }

    /// `obs` followed by `action`: the dynamics model input.
    pub fn input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.obs.len() + self.action.len());
        v.extend_from_slice(&self.obs);
        v.extend_from_slice(&self.action);
        v
    }

    /// `next_obs - obs`: the dynamics model target.
    pub fn delta(&self) -> Vec<f64> {
        self.next_obs.iter().zip(&self.obs).map(|(n, o)| n - o).collect()
    }
}

/// Bounded FIFO of transitions for a single environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBuffer {
    env: EnvId,
    capacity: usize,
    transitions: VecDeque<Transition>,
}

impl TransitionBuffer {
    pub fn new(env: EnvId, capacity: usize) -> Self {
        TransitionBuffer {
            env,
            capacity: capacity.max(1),
            transitions: VecDeque::new(),
        }
    }

    pub fn env(&self) -> EnvId {
        self.env
    }

    pub fn obs_dim(&self) -> usize {
        self.env.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.env.act_dim()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.transitions.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter()
    }

    /// Appends a transition, evicting the oldest one at capacity.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        for (expected, got, context) in [
            (self.obs_dim(), t.obs.len(), "transition obs"),
            (self.act_dim(), t.action.len(), "transition action"),
            (self.obs_dim(), t.next_obs.len(), "transition next_obs"),
        ] {
            if expected != got {
                return Err(Error::Dimension { expected, got, context });
            }
        }
        if !t.is_finite() {
            return Err(Error::DomainInput("non-finite transition".into()));
        }
        if self.transitions.len() == self.capacity {
            self.transitions.pop_front();
        }
        self.transitions.push_back(t);
        Ok(())
    }
}

/// Runs uniformly random actions, resetting on termination or after 200 steps.
pub fn collect_random(env: EnvId, n_steps: usize, rng_seed: u64) -> Result<TransitionBuffer> {
    if n_steps == 0 {
        return Err(Error::DomainInput("n_steps must be positive".into()));
    }
    let mut rng = seed::stream(rng_seed, &[0xC011]);
    let (low, high) = env.action_bounds();
    let mut buffer = TransitionBuffer::new(env, DEFAULT_CAPACITY.max(n_steps));

    let mut state = env.reset(&mut rng);
    let mut episode_steps = 0;
    for _ in 0..n_steps {
        let obs = state.observe().values;
        let action = vec![rng.random_range(low..=high)];
        let (_, done) = state.step(&action)?;
        buffer.push(Transition {
            obs,
            action,
            next_obs: state.observe().values,
        })?;
        episode_steps += 1;
        if done || episode_steps >= DEFAULT_EPISODE_STEPS {
            state = env.reset(&mut rng);
            episode_steps = 0;
        }
    }
    Ok(buffer)
}

/// Drops every transition with either endpoint inside `region`.
pub fn filter_region(buffer: &TransitionBuffer, region: &RegionSpec) -> Result<TransitionBuffer> {
    if buffer.is_empty() {
        return Err(Error::DomainInput("cannot filter an empty buffer".into()));
    }
    if region.env() != buffer.env() {
        return Err(Error::Config(format!(
            "region for {} applied to a {} buffer",
            region.env(),
            buffer.env()
        )));
    }
    let mut out = TransitionBuffer::new(buffer.env(), buffer.capacity());
    out.transitions = buffer
        .iter()
        .filter(|t| !region.contains(&t.obs) && !region.contains(&t.next_obs))
        .cloned()
        .collect();
    if out.is_empty() {
        log::warn!("region filter removed every transition");
    }
    Ok(out)
}

/// Per-dimension input normalization over `obs ⊕ action`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        NormStats {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (((o, x), m), s) in out.iter_mut().zip(input).zip(&self.mean).zip(&self.std) {
            *o = (x - m) / s;
        }
    }
}

/// Population (1/n) mean and standard deviation of the model inputs.
pub fn fit_norm_stats(buffer: &TransitionBuffer) -> Result<NormStats> {
    if buffer.len() < 2 {
        return Err(Error::BufferTooSmall {
            needed: 2,
            have: buffer.len(),
        });
    }
    let inputs: Vec<Vec<f64>> = buffer.iter().map(Transition::input).collect();
    Ok(fit_columns(&inputs))
}

pub(crate) fn fit_columns(rows: &[Vec<f64>]) -> NormStats {
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for row in rows {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    NormStats { mean, std }
}

impl TransitionBuffer {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{DATASET_MAGIC} env={} obs_dim={} act_dim={}\n",
            self.env,
            self.obs_dim(),
            self.act_dim()
        );
        for t in &self.transitions {
            write_row(
                &mut out,
                t.obs.iter().chain(&t.action).chain(&t.next_obs).copied(),
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines = complete_lines(text)?;
        let header = lines.first().ok_or_else(|| Error::format(1, "empty file"))?;
        let fields = header_fields(header, DATASET_MAGIC)?;
        let env = header_env(&fields, 1)?;
        let obs_dim = header_usize(&fields, "obs_dim", 1)?;
        let act_dim = header_usize(&fields, "act_dim", 1)?;
        if obs_dim != env.obs_dim() {
            return Err(Error::Dimension { expected: env.obs_dim(), got: obs_dim, context: "dataset header obs_dim" });
        }
        if act_dim != env.act_dim() {
            return Err(Error::Dimension { expected: env.act_dim(), got: act_dim, context: "dataset header act_dim" });
        }
        let width = 2 * obs_dim + act_dim;
        let records = lines.len() - 1;
        let mut buffer = TransitionBuffer::new(env, DEFAULT_CAPACITY.max(records));
        for (i, line) in lines.iter().enumerate().skip(1) {
            let row = parse_row(line, i + 1, width)?;
            buffer.push(Transition {
                obs: row[..obs_dim].to_vec(),
                action: row[obs_dim..obs_dim + act_dim].to_vec(),
                next_obs: row[obs_dim + act_dim..].to_vec(),
            })?;
        }
        Ok(buffer)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_text(&text)
    }
}
