//! Bootstrap ensemble of probabilistic dynamics models.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{fit_norm_stats, NormStats, TransitionBuffer};
use crate::env::EnvId;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Mlp};
use crate::seed;
use crate::textio::{header_env, header_fields, header_usize, write_row, LineCursor};

const ENSEMBLE_MAGIC: &str = "#ugcem-ensemble-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub ensemble_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![200, 200, 200],
            ensemble_size: 4,
            batch_size: 32,
            epochs: 50,
            adam: AdamConfig::default(),
        }
    }
}

/// `B` independently trained networks sharing one input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub env: EnvId,
    pub members: Vec<Mlp>,
    pub norm: NormStats,
}

/// Per-member, per-epoch mean training NLL.
pub type LossHistory = Vec<Vec<f64>>;

/// Indices of member `member`'s bootstrap resample (`n` draws with replacement).
pub fn bootstrap_indices(n: usize, rng_seed: u64, member: usize) -> Vec<usize> {
    let mut rng = seed::stream(rng_seed, &[0xB007, member as u64]);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn train_ensemble(
    buffer: &TransitionBuffer,
    config: &TrainConfig,
    rng_seed: u64,
) -> Result<(Ensemble, LossHistory)> {
    if config.ensemble_size == 0 || config.batch_size == 0 {
        return Err(Error::Config("ensemble size and batch size must be positive".into()));
    }
    if buffer.len() < config.batch_size.max(2) {
        return Err(Error::BufferTooSmall {
            needed: config.batch_size.max(2),
            have: buffer.len(),
        });
    }
    let env = buffer.env();
    let norm = fit_norm_stats(buffer)?;
    let in_dim = norm.dim();
    let state_dim = env.obs_dim();
    let n = buffer.len();

    let mut inputs = Array2::<f64>::zeros((n, in_dim));
    let mut targets = Array2::<f64>::zeros((n, state_dim));
    for (i, t) in buffer.iter().enumerate() {
        norm.apply(&t.input(), inputs.row_mut(i).as_slice_mut().expect("row"));
        targets
            .row_mut(i)
            .iter_mut()
            .zip(t.delta())
            .for_each(|(dst, v)| *dst = v);
    }

    let results: Vec<Result<(Mlp, Vec<f64>)>> = (0..config.ensemble_size)
        .into_par_iter()
        .map(|m| train_member(inputs.view(), targets.view(), config, rng_seed, m))
        .collect();

    let mut members = Vec::with_capacity(config.ensemble_size);
    let mut history = Vec::with_capacity(config.ensemble_size);
    for r in results {
        let (net, losses) = r?;
        members.push(net);
        history.push(losses);
    }
    Ok((Ensemble { env, members, norm }, history))
}

fn train_member(
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    config: &TrainConfig,
    rng_seed: u64,
    member: usize,
) -> Result<(Mlp, Vec<f64>)> {
    let n = inputs.nrows();
    let mut order = bootstrap_indices(n, rng_seed, member);
    let mut rng = seed::stream(rng_seed, &[0x7EA1, member as u64]);
    let mut net = Mlp::new(inputs.ncols(), &config.hidden, targets.ncols(), &mut rng);
    let mut adam = AdamState::new(&net, config.adam);
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = inputs.select(Axis(0), batch);
            let y = targets.select(Axis(0), batch);
            let (loss, grads) = net.loss_and_grad(x.view(), y.view())?;
            adam.step(&mut net, &grads);
            total += loss * batch.len() as f64;
        }
        let mean = total / n as f64;
        if !mean.is_finite() || !net.is_finite() {
            return Err(Error::Numerical(format!(
                "member {member} diverged in epoch {epoch}"
            )));
        }
        log::debug!("member {member} epoch {epoch}: nll {mean:.5}");
        losses.push(mean);
    }
    Ok((net, losses))
}

/// Draws `mean + √var ⊙ z` with `z` standard normal, one draw per dimension in order.
pub fn gaussian_sample<R: Rng + ?Sized>(mean: &[f64], var: &[f64], rng: &mut R) -> Vec<f64> {
    mean.iter()
        .zip(var)
        .map(|(m, v)| {
            let z: f64 = rng.sample(StandardNormal);
            m + v.sqrt() * z
        })
        .collect()
}

impl Ensemble {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.env.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.env.act_dim()
    }

    fn member(&self, index: usize) -> Result<&Mlp> {
        self.members.get(index).ok_or(Error::MemberOutOfRange {
            index,
            size: self.members.len(),
        })
    }

    /// Next-state mean and variance for a batch of rows.
    pub fn predict_batch(
        &self,
        member: usize,
        obs: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let net = self.member(member)?;
        let (rows, od, ad) = (obs.nrows(), self.obs_dim(), self.act_dim());
        if obs.ncols() != od || actions.ncols() != ad || actions.nrows() != rows {
            return Err(Error::Dimension {
                expected: od + ad,
                got: obs.ncols() + actions.ncols(),
                context: "ensemble prediction input",
            });
        }
        let mut x = Array2::<f64>::zeros((rows, od + ad));
        let mut raw = vec![0.0; od + ad];
        for (i, mut row) in x.outer_iter_mut().enumerate() {
            raw[..od].iter_mut().zip(obs.row(i)).for_each(|(d, s)| *d = *s);
            raw[od..].iter_mut().zip(actions.row(i)).for_each(|(d, s)| *d = *s);
            self.norm.apply(&raw, row.as_slice_mut().expect("row"));
        }
        let out = net.forward_batch(x.view())?;
        let mean = out.mean + obs;
        let var = out.logvar.mapv(f64::exp);
        Ok((mean, var))
    }

    pub fn predict_dist(&self, member: usize, obs: &[f64], action: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let o = ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::Numerical(e.to_string()))?;
        let a = ArrayView2::from_shape((1, action.len()), action)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        if obs.len() != self.obs_dim() || action.len() != self.act_dim() {
            return Err(Error::Dimension {
                expected: self.obs_dim() + self.act_dim(),
                got: obs.len() + action.len(),
                context: "ensemble prediction input",
            });
        }
        let (m, v) = self.predict_batch(member, o, a)?;
        Ok((m.row(0).to_vec(), v.row(0).to_vec()))
    }

    pub fn sample_next<R: Rng + ?Sized>(
        &self,
        member: usize,
        obs: &[f64],
        action: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let (mean, var) = self.predict_dist(member, obs, action)?;
        Ok(gaussian_sample(&mean, &var, rng))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{ENSEMBLE_MAGIC} env={} obs_dim={} act_dim={} members={}\n",
            self.env,
            self.obs_dim(),
            self.act_dim(),
            self.size()
        );
        write_row(&mut out, self.norm.mean.iter().copied());
        write_row(&mut out, self.norm.std.iter().copied());
        for m in &self.members {
            m.write_text(&mut out);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cur = LineCursor::new(text)?;
        let header = cur.next_line()?;
        let fields = header_fields(header, ENSEMBLE_MAGIC)?;
        let env = header_env(&fields, 1)?;
        let obs_dim = header_usize(&fields, "obs_dim", 1)?;
        let act_dim = header_usize(&fields, "act_dim", 1)?;
        let count = header_usize(&fields, "members", 1)?;
        if obs_dim != env.obs_dim() || act_dim != env.act_dim() {
            return Err(Error::Dimension {
                expected: env.obs_dim() + env.act_dim(),
                got: obs_dim + act_dim,
                context: "ensemble header dims",
            });
        }
        let in_dim = obs_dim + act_dim;
        let mean = cur.next_row(in_dim)?;
        let std = cur.next_row(in_dim)?;
        let mut members = Vec::with_capacity(count);
        for _ in 0..count {
            let m = Mlp::read_text(&mut cur)?;
            if m.input_dim() != in_dim || m.state_dim() != obs_dim {
                return Err(Error::Dimension {
                    expected: in_dim,
                    got: m.input_dim(),
                    context: "ensemble member shape",
                });
            }
            members.push(m);
        }
        if !cur.is_done() {
            return Err(Error::format(cur.line_no() + 1, "trailing content after ensemble"));
        }
        Ok(Ensemble {
            env,
            members,
            norm: NormStats { mean, std },
        })
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
