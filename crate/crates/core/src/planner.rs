//! Uncertainty-guided cross-entropy planning.
//!
//! Each candidate action sequence is rolled out with `P` particles through
//! the ensemble. The spread of the particles' predicted states, normalized
//! per state dimension and rollout step by a running mean, gives the
//! candidate's uncertainty `ω`. Candidates are scored by their particle-mean
//! return minus `β·ω`, and the planning distribution is refit to the elites.
//! With `β = 0` this is plain PETS.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array2, Array3, Array4, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::env::EnvId;
use crate::error::{Error, Result};
use crate::seed;

/// Score assigned to candidates whose rollouts produced non-finite states.
pub const FLAGGED_SCORE: f64 = f64::MIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    /// One ensemble member per particle for the whole rollout.
    TsInf,
    /// A fresh member per particle and step.
    Ts1,
}

impl Propagation {
    fn name(self) -> &'static str {
        match self {
            Propagation::TsInf => "TS_inf",
            Propagation::Ts1 => "TS_1",
        }
    }
}

/// Which particle spread feeds `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyKind {
    /// Variance over all particles.
    Total,
    /// Variance of the per-member particle means (TS_inf only).
    Epistemic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemConfig {
    pub horizon: usize,
    pub iterations: usize,
    pub elite_ratio: f64,
    pub population: usize,
    pub particles: usize,
    /// Weight kept on the previous distribution at each refit.
    pub alpha: f64,
    pub beta: f64,
    pub propagation: Propagation,
    pub uncertainty: UncertaintyKind,
    pub action_low: f64,
    pub action_high: f64,
}

impl CemConfig {
    pub fn for_env(env: EnvId) -> Self {
        let (action_low, action_high) = env.action_bounds();
        CemConfig {
            horizon: 10,
            iterations: 5,
            elite_ratio: 0.3,
            population: 200,
            particles: 12,
            alpha: 0.1,
            beta: 0.0,
            propagation: Propagation::TsInf,
            uncertainty: UncertaintyKind::Total,
            action_low,
            action_high,
        }
    }

    pub fn elite_count(&self) -> usize {
        (self.elite_ratio * self.population as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.horizon == 0 || self.particles == 0 || self.population == 0 {
            return bad("horizon, particles and population must be positive");
        }
        if self.elite_count() == 0 || self.elite_count() > self.population {
            return bad("elite_ratio must select between 1 and population candidates");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and non-negative");
        }
        if !(self.action_low < self.action_high) {
            return bad("action bounds must satisfy low < high");
        }
        if self.uncertainty == UncertaintyKind::Epistemic && self.propagation == Propagation::Ts1 {
            return Err(Error::UnsupportedMode(Propagation::Ts1.name()));
        }
        Ok(())
    }
}

/// Diagonal Gaussian over action sequences, `horizon × act_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningDistribution {
    pub mean: Array2<f64>,
    pub var: Array2<f64>,
}

impl PlanningDistribution {
    /// Centered on the middle of the bounds with variance `((high − low)/4)²`.
    pub fn initial(horizon: usize, act_dim: usize, low: f64, high: f64) -> Self {
        PlanningDistribution {
            mean: Array2::from_elem((horizon, act_dim), (low + high) / 2.0),
            var: Array2::from_elem((horizon, act_dim), ((high - low) / 4.0).powi(2)),
        }
    }

    /// Previous solution advanced one step, the last step re-initialized.
    /// Variances restart from the initial value.
    pub fn warm_start(prev: &PlanningDistribution, low: f64, high: f64) -> Self {
        let mut next = Self::initial(prev.horizon(), prev.act_dim(), low, high);
        let h = prev.horizon();
        if h > 1 {
            next.mean
                .slice_mut(s![..h - 1, ..])
                .assign(&prev.mean.slice(s![1.., ..]));
        }
        next
    }

    pub fn horizon(&self) -> usize {
        self.mean.nrows()
    }

    pub fn act_dim(&self) -> usize {
        self.mean.ncols()
    }
}

/// Draws `n` action sequences, clamping each action to `[low, high]`.
pub fn sample_population<R: Rng + ?Sized>(
    dist: &PlanningDistribution,
    n: usize,
    low: f64,
    high: f64,
    rng: &mut R,
) -> Array3<f64> {
    let (h, a) = dist.mean.dim();
    let mut out = Array3::zeros((n, h, a));
    for mut seq in out.outer_iter_mut() {
        for t in 0..h {
            for d in 0..a {
                let z: f64 = rng.sample(StandardNormal);
                seq[[t, d]] = (dist.mean[[t, d]] + dist.var[[t, d]].sqrt() * z).clamp(low, high);
            }
        }
    }
    out
}

/// Member index per `(candidate, particle, step)`.
pub fn assign_members<R: Rng + ?Sized>(
    n: usize,
    particles: usize,
    horizon: usize,
    ensemble_size: usize,
    mode: Propagation,
    rng: &mut R,
) -> Array3<usize> {
    let b = ensemble_size.max(1);
    let mut out = Array3::zeros((n, particles, horizon));
    match mode {
        Propagation::TsInf => {
            let mut order: Vec<usize> = Vec::with_capacity(particles);
            for c in 0..n {
                order.clear();
                order.extend((0..particles).map(|p| p % b));
                order.shuffle(rng);
                for (p, &m) in order.iter().enumerate() {
                    out.slice_mut(s![c, p, ..]).fill(m);
                }
            }
        }
        Propagation::Ts1 => out.mapv_inplace(|_| rng.random_range(0..b)),
    }
    out
}

/// Particle trajectories for a whole population.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTensor {
    /// `N × P × (H+1) × dim(S)`.
    pub states: Array4<f64>,
    /// `N × P × H`.
    pub rewards: Array3<f64>,
    /// `N × P × (H+1)`, absorbing along `t`.
    pub done: Array3<bool>,
    /// `N × P × H`.
    pub members: Array3<usize>,
    /// Candidates whose model outputs went non-finite.
    pub flagged: Vec<bool>,
}

impl RolloutTensor {
    pub fn candidates(&self) -> usize {
        self.states.dim().0
    }

    pub fn candidate_states(&self, n: usize) -> ArrayView3<'_, f64> {
        self.states.index_axis(Axis(0), n)
    }

    pub fn candidate_rewards(&self, n: usize) -> ArrayView2<'_, f64> {
        self.rewards.index_axis(Axis(0), n)
    }
}

/// Draws member assignments and a stream key from `rng`, then propagates.
pub fn rollout<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    start_obs: &[f64],
    actions: ArrayView3<f64>,
    config: &CemConfig,
    rng: &mut R,
) -> Result<RolloutTensor> {
    let (n, h, _) = actions.dim();
    let members = assign_members(n, config.particles, h, ensemble.size(), config.propagation, rng);
    let key = rng.next_u64();
    rollout_with(ensemble, start_obs, actions, members, key)
}

/// Propagates particles with fixed assignments. Each particle `(n, p)` draws
/// its Gaussian noise, step after step, from its own stream keyed by `(key, n, p)`.
pub fn rollout_with(
    ensemble: &Ensemble,
    start_obs: &[f64],
    actions: ArrayView3<f64>,
    members: Array3<usize>,
    key: u64,
) -> Result<RolloutTensor> {
    let env = ensemble.env;
    let sd = ensemble.obs_dim();
    let (n, h, ad) = actions.dim();
    let p = members.dim().1;
    if start_obs.len() != sd {
        return Err(Error::Dimension { expected: sd, got: start_obs.len(), context: "planning start state" });
    }
    if ad != ensemble.act_dim() {
        return Err(Error::Dimension { expected: ensemble.act_dim(), got: ad, context: "candidate actions" });
    }
    if members.dim() != (n, p, h) {
        return Err(Error::Dimension { expected: n * p * h, got: members.len(), context: "member assignment" });
    }

    let mut states = Array4::<f64>::zeros((n, p, h + 1, sd));
    for mut row in states.slice_mut(s![.., .., 0, ..]).rows_mut() {
        row.assign(&ArrayView1::from(start_obs));
    }
    let mut rewards = Array3::<f64>::zeros((n, p, h));
    let mut done = Array3::from_elem((n, p, h + 1), env.is_terminal(start_obs));
    let mut flagged = vec![false; n];
    let mut stepped = Array2::from_elem((n, p), false);
    let mut rows: Vec<(usize, usize)> = Vec::with_capacity(n * p);
    let mut noise: Vec<_> = (0..n * p)
        .map(|i| seed::stream(key, &[(i / p) as u64, (i % p) as u64]))
        .collect();

    for t in 0..h {
        stepped.fill(false);
        for b in 0..ensemble.size() {
            rows.clear();
            for c in 0..n {
                if flagged[c] {
                    continue;
                }
                for q in 0..p {
                    if !done[[c, q, t]] && members[[c, q, t]] == b {
                        rows.push((c, q));
                    }
                }
            }
            if rows.is_empty() {
                continue;
            }
            let obs = Array2::from_shape_fn((rows.len(), sd), |(i, d)| states[[rows[i].0, rows[i].1, t, d]]);
            let act = Array2::from_shape_fn((rows.len(), ad), |(i, d)| actions[[rows[i].0, t, d]]);
            let (mean, var) = ensemble.predict_batch(b, obs.view(), act.view())?;
            for (i, &(c, q)) in rows.iter().enumerate() {
                let noise = &mut noise[c * p + q];
                let mut next = states.slice_mut(s![c, q, t + 1, ..]);
                let mut finite = true;
                for d in 0..sd {
                    let z: f64 = noise.sample(StandardNormal);
                    let v = mean[[i, d]] + var[[i, d]].sqrt() * z;
                    finite &= v.is_finite();
                    next[d] = v;
                }
                if finite {
                    stepped[[c, q]] = true;
                } else {
                    flagged[c] = true;
                }
            }
        }

        for c in 0..n {
            for q in 0..p {
                if stepped[[c, q]] && !flagged[c] {
                    let obs = states.slice(s![c, q, t, ..]).to_vec();
                    let next = states.slice(s![c, q, t + 1, ..]).to_vec();
                    let action = actions.slice(s![c, t, ..]).to_vec();
                    rewards[[c, q, t]] = env.transition_reward(&obs, &action, &next);
                    done[[c, q, t + 1]] = env.is_terminal(&next);
                } else {
                    // Terminal, flagged or frozen: hold the state, pay nothing.
                    let prev = states.slice(s![c, q, t, ..]).to_owned();
                    states.slice_mut(s![c, q, t + 1, ..]).assign(&prev);
                    rewards[[c, q, t]] = 0.0;
                    done[[c, q, t + 1]] = done[[c, q, t]];
                }
            }
        }
    }

    Ok(RolloutTensor { states, rewards, done, members, flagged })
}

/// Population (1/P) variance over particles for each state dimension and
/// rollout step `t = 1..=H`, as a `dim(S) × H` table.
pub fn particle_variance(states_n: ArrayView3<f64>) -> Array2<f64> {
    let (p, h1, sd) = states_n.dim();
    let h = h1 - 1;
    let mut out = Array2::zeros((sd, h));
    let inv_p = 1.0 / p as f64;
    for t in 1..=h {
        for d in 0..sd {
            let col = states_n.slice(s![.., t, d]);
            out[[d, t - 1]] = shifted_variance(col.iter().copied(), inv_p);
        }
    }
    out
}

/// Population variance, computed on values shifted by the first one so
/// identical inputs give exactly zero.
fn shifted_variance(values: impl Iterator<Item = f64> + Clone, inv_n: f64) -> f64 {
    let mut it = values.clone();
    let Some(origin) = it.next() else { return 0.0 };
    let mean = values.clone().map(|v| v - origin).sum::<f64>() * inv_n;
    values.map(|v| (v - origin - mean).powi(2)).sum::<f64>() * inv_n
}

/// Variance across ensemble members of the per-member particle means,
/// `dim(S) × H`. `members_n` gives each particle's member.
pub fn epistemic_variance(states_n: ArrayView3<f64>, members_n: &[usize]) -> Array2<f64> {
    let (p, h1, sd) = states_n.dim();
    let h = h1 - 1;
    let mut groups: Vec<usize> = members_n.to_vec();
    groups.sort_unstable();
    groups.dedup();
    let g = groups.len() as f64;
    let mut out = Array2::zeros((sd, h));
    let mut means = vec![0.0; groups.len()];
    for t in 1..=h {
        for d in 0..sd {
            let origin = states_n[[0, t, d]];
            for (k, &m) in groups.iter().enumerate() {
                let (sum, count) = (0..p)
                    .filter(|&q| members_n[q] == m)
                    .fold((0.0, 0usize), |(s, c), q| (s + (states_n[[q, t, d]] - origin), c + 1));
                means[k] = sum / count as f64;
            }
            out[[d, t - 1]] = shifted_variance(means.iter().copied(), 1.0 / g);
        }
    }
    out
}

/// Running mean of particle variance per state dimension and rollout step.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceNormalizer {
    /// `dim(S) × H`.
    pub mean_var: Array2<f64>,
    pub updates: u64,
    pub decay: f64,
    pub floor: f64,
}

impl VarianceNormalizer {
    pub const DEFAULT_DECAY: f64 = 0.99;
    pub const DEFAULT_FLOOR: f64 = 1e-8;

    pub fn new(state_dim: usize, horizon: usize) -> Self {
        VarianceNormalizer {
            mean_var: Array2::ones((state_dim, horizon)),
            updates: 0,
            decay: Self::DEFAULT_DECAY,
            floor: Self::DEFAULT_FLOOR,
        }
    }

    /// A table of ones, treated as already initialized.
    pub fn identity(state_dim: usize, horizon: usize) -> Self {
        VarianceNormalizer {
            updates: 1,
            ..Self::new(state_dim, horizon)
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.updates > 0
    }

    /// Folds the mean of `batch` into the table. The first update replaces the
    /// table outright; later ones blend with `decay`.
    pub fn update(&mut self, batch: &[Array2<f64>]) {
        if batch.is_empty() {
            return;
        }
        let mut mean = Array2::<f64>::zeros(self.mean_var.raw_dim());
        for s2 in batch {
            mean += s2;
        }
        mean /= batch.len() as f64;
        if self.updates == 0 {
            self.mean_var = mean;
        } else {
            self.mean_var = &self.mean_var * self.decay + &mean * (1.0 - self.decay);
        }
        let floor = self.floor;
        self.mean_var.mapv_inplace(|v| v.max(floor));
        self.updates += 1;
    }
}

pub fn update_normalizer(normalizer: &mut VarianceNormalizer, sigma2_batch: &[Array2<f64>]) {
    normalizer.update(sigma2_batch);
}

/// `ω`: the normalized variance averaged over rollout steps and state dimensions.
pub fn uncertainty(sigma2: ArrayView2<f64>, normalizer: &VarianceNormalizer) -> Result<f64> {
    if sigma2.dim() != normalizer.mean_var.dim() {
        return Err(Error::Dimension {
            expected: normalizer.mean_var.len(),
            got: sigma2.len(),
            context: "variance table vs normalizer",
        });
    }
    let (sd, h) = sigma2.dim();
    let total: f64 = sigma2
        .iter()
        .zip(normalizer.mean_var.iter())
        .map(|(v, m)| v / m)
        .sum();
    Ok(total / (sd * h) as f64)
}

/// `ω` computed from the epistemic part of the spread only.
pub fn uncertainty_decomposed(
    states_n: ArrayView3<f64>,
    members_n: ArrayView2<usize>,
    normalizer: &VarianceNormalizer,
    mode: Propagation,
) -> Result<f64> {
    if mode == Propagation::Ts1 {
        return Err(Error::UnsupportedMode(mode.name()));
    }
    let per_particle = members_n.column(0).to_vec();
    uncertainty(epistemic_variance(states_n, &per_particle).view(), normalizer)
}

/// Particle-mean sum of rewards.
pub fn mean_return(rewards_n: ArrayView2<f64>) -> f64 {
    rewards_n.sum() / rewards_n.nrows() as f64
}

/// `R = mean_p Σ_t r − β·ω`.
pub fn penalized_return(rewards_n: ArrayView2<f64>, omega: f64, beta: f64) -> f64 {
    mean_return(rewards_n) - beta * omega
}

/// Indices of the `k` best scores, highest first; ties go to the lower index.
/// Flagged candidates are never selected.
pub fn select_elites(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > FLAGGED_SCORE).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx.truncate(k);
    idx
}

/// Refits the planning distribution to the elite set with momentum `alpha`.
pub fn cem_iteration(
    dist: &PlanningDistribution,
    actions: ArrayView3<f64>,
    scores: &[f64],
    config: &CemConfig,
) -> Result<PlanningDistribution> {
    let elites = select_elites(scores, config.elite_count());
    refit(dist, actions, &elites, config.alpha)
}

fn refit(
    dist: &PlanningDistribution,
    actions: ArrayView3<f64>,
    elites: &[usize],
    alpha: f64,
) -> Result<PlanningDistribution> {
    if elites.is_empty() {
        return Err(Error::AllCandidatesFlagged);
    }
    let chosen = actions.select(Axis(0), elites);
    let k = elites.len() as f64;
    let elite_mean = chosen.sum_axis(Axis(0)) / k;
    let mut elite_var = Array2::<f64>::zeros(elite_mean.raw_dim());
    for seq in chosen.outer_iter() {
        let diff = &seq - &elite_mean;
        elite_var += &(&diff * &diff);
    }
    elite_var /= k;
    Ok(PlanningDistribution {
        mean: &dist.mean * alpha + &elite_mean * (1.0 - alpha),
        var: &dist.var * alpha + &elite_var * (1.0 - alpha),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub omega: f64,
    pub mean_return: f64,
    pub score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// Distribution the population was sampled from.
    pub dist: PlanningDistribution,
    pub candidates: Vec<CandidateScore>,
    pub elites: Vec<usize>,
    /// Mean over steps `1..=H` and state dims of the variance of all particle states.
    pub state_spread: f64,
    pub states: Option<Array4<f64>>,
}

impl IterationTrace {
    pub fn mean_omega(&self) -> f64 {
        let live: Vec<f64> = self.candidates.iter().filter(|c| !c.flagged).map(|c| c.omega).collect();
        live.iter().sum::<f64>() / live.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanTrace {
    pub iterations: Vec<IterationTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutput {
    pub action: Vec<f64>,
    pub dist: PlanningDistribution,
    pub trace: PlanTrace,
}

/// Candidate scoring rule: `(mean_return, omega, beta) -> score`.
pub type Scorer<'a> = &'a dyn Fn(f64, f64, f64) -> f64;

#[derive(Clone, Copy, Default)]
pub struct PlanOptions<'a> {
    /// Keep every iteration's full rollout tensor in the trace.
    pub record_states: bool,
    /// Replaces the penalized return when set.
    pub scorer: Option<Scorer<'a>>,
}

pub fn plan<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    start_obs: &[f64],
    config: &CemConfig,
    normalizer: &mut VarianceNormalizer,
    rng: &mut R,
    warm_start: Option<&PlanningDistribution>,
) -> Result<PlanOutput> {
    plan_with(ensemble, start_obs, config, normalizer, rng, warm_start, PlanOptions::default())
}

/// One MPC planning call: sample → roll out → score → refit, `iterations`
/// times, then fold this call's particle variances into `normalizer`.
///
/// The normalizer is held fixed while scoring. On the first call ever it is
/// provisionally seeded from the first iteration's variances.
pub fn plan_with<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    start_obs: &[f64],
    config: &CemConfig,
    normalizer: &mut VarianceNormalizer,
    rng: &mut R,
    warm_start: Option<&PlanningDistribution>,
    options: PlanOptions<'_>,
) -> Result<PlanOutput> {
    config.validate()?;
    let sd = ensemble.obs_dim();
    let ad = ensemble.act_dim();
    let h = config.horizon;
    if normalizer.mean_var.dim() != (sd, h) {
        return Err(Error::Dimension {
            expected: sd * h,
            got: normalizer.mean_var.len(),
            context: "normalizer table vs horizon",
        });
    }
    let (low, high) = (config.action_low, config.action_high);
    let mut dist = match warm_start {
        Some(prev) if prev.mean.dim() == (h, ad) => PlanningDistribution::warm_start(prev, low, high),
        _ => PlanningDistribution::initial(h, ad, low, high),
    };

    let mut scoring: Option<VarianceNormalizer> = normalizer.is_initialized().then(|| normalizer.clone());
    let mut call_batch: Vec<Array2<f64>> = Vec::new();
    let mut trace = PlanTrace::default();

    for _ in 0..config.iterations {
        let actions = sample_population(&dist, config.population, low, high, rng);
        let roll = rollout(ensemble, start_obs, actions.view(), config, rng)?;

        let sigma2: Vec<Array2<f64>> = (0..config.population)
            .map(|c| match config.uncertainty {
                UncertaintyKind::Total => particle_variance(roll.candidate_states(c)),
                UncertaintyKind::Epistemic => epistemic_variance(
                    roll.candidate_states(c),
                    &roll.members.slice(s![c, .., 0]).to_vec(),
                ),
            })
            .collect();
        let live: Vec<Array2<f64>> = sigma2
            .iter()
            .zip(&roll.flagged)
            .filter(|(_, f)| !**f)
            .map(|(s2, _)| s2.clone())
            .collect();
        let norm = scoring.get_or_insert_with(|| {
            let mut provisional = normalizer.clone();
            provisional.update(&live);
            provisional
        });

        let mut candidates = Vec::with_capacity(config.population);
        for c in 0..config.population {
            let omega = uncertainty(sigma2[c].view(), norm)?;
            let ret = mean_return(roll.candidate_rewards(c));
            let flagged = roll.flagged[c];
            let score = if flagged {
                FLAGGED_SCORE
            } else {
                match options.scorer {
                    Some(f) => f(ret, omega, config.beta),
                    None => ret - config.beta * omega,
                }
            };
            candidates.push(CandidateScore { omega, mean_return: ret, score, flagged });
        }
        let scores: Vec<f64> = candidates.iter().map(|c| c.score).collect();
        let elites = select_elites(&scores, config.elite_count());

        trace.iterations.push(IterationTrace {
            dist: dist.clone(),
            candidates,
            elites: elites.clone(),
            state_spread: state_spread(&roll),
            states: options.record_states.then(|| roll.states.clone()),
        });
        call_batch.extend(live);

        match refit(&dist, actions.view(), &elites, config.alpha) {
            Ok(next) => dist = next,
            Err(Error::AllCandidatesFlagged) => {
                log::warn!("all candidates flagged; keeping the previous planning distribution");
            }
            Err(e) => return Err(e),
        }
    }

    normalizer.update(&call_batch);
    let action = dist.mean.row(0).iter().map(|a| a.clamp(low, high)).collect();
    Ok(PlanOutput { action, dist, trace })
}

/// Mean over steps `1..=H` and state dims of the variance of every live
/// particle's state across the whole population.
pub fn state_spread(roll: &RolloutTensor) -> f64 {
    let (n, p, h1, sd) = roll.states.dim();
    let live: Vec<usize> = (0..n).filter(|&c| !roll.flagged[c]).collect();
    if live.is_empty() || h1 < 2 {
        return 0.0;
    }
    let count = (live.len() * p) as f64;
    let mut total = 0.0;
    for t in 1..h1 {
        for d in 0..sd {
            let vals = live
                .iter()
                .flat_map(|&c| (0..p).map(move |q| (c, q)))
                .map(|(c, q)| roll.states[[c, q, t, d]]);
            total += shifted_variance(vals, 1.0 / count);
        }
    }
    total / ((h1 - 1) * sd) as f64
}

impl PlanTrace {
    /// `iteration,candidate,omega,mean_return,penalized_return`.
    pub fn write_scores_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iteration", "candidate", "omega", "mean_return", "penalized_return"])?;
        for (i, it) in self.iterations.iter().enumerate() {
            for (c, cand) in it.candidates.iter().enumerate() {
                w.write_record([
                    i.to_string(),
                    c.to_string(),
                    cand.omega.to_string(),
                    cand.mean_return.to_string(),
                    cand.score.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `iteration,candidate,particle,t,s_0..s_{d-1}`; requires recorded states.
    pub fn write_states_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let mut header_written = false;
        for (i, it) in self.iterations.iter().enumerate() {
            let Some(states) = &it.states else {
                return Err(Error::Config("plan trace was recorded without rollout states".into()));
            };
            let (n, p, h1, sd) = states.dim();
            if !header_written {
                write!(out, "iteration,candidate,particle,t")?;
                for d in 0..sd {
                    write!(out, ",s_{d}")?;
                }
                writeln!(out)?;
                header_written = true;
            }
            for c in 0..n {
                for q in 0..p {
                    for t in 0..h1 {
                        write!(out, "{i},{c},{q},{t}")?;
                        for d in 0..sd {
                            write!(out, ",{}", states[[c, q, t, d]])?;
                        }
                        writeln!(out)?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}
