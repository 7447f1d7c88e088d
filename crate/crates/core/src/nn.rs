//! Feed-forward Gaussian regression network with hand-written gradients.
//!
//! The network maps a normalized `obs ⊕ action` row to a mean and a
//! soft-bounded log-variance over the state delta. Everything works on
//! row-major batches so training and rollouts share the same code path.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::textio::{header_fields, header_usize, LineCursor};

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 4.0;
const MODEL_MAGIC: &str = "#ugcem-model-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in × fan_out`, applied as `x · W`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }
}

/// ReLU MLP whose last linear layer emits `[mean | raw log-variance]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Gaussian head outputs for a batch, one row per input.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBatch {
    pub mean: Array2<f64>,
    pub logvar: Array2<f64>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Applies the two-sided softplus bound, returning `(logvar, d logvar / d raw)`.
pub fn bound_logvar(raw: f64) -> (f64, f64) {
    let upper = LOGVAR_MAX - softplus(LOGVAR_MAX - raw);
    let d_upper = sigmoid(LOGVAR_MAX - raw);
    let lv = LOGVAR_MIN + softplus(upper - LOGVAR_MIN);
    (lv, sigmoid(upper - LOGVAR_MIN) * d_upper)
}

/// Gaussian NLL averaged over dimensions, without the `½·log 2π` constant.
pub fn nll_loss(mean: &[f64], logvar: &[f64], target: &[f64]) -> f64 {
    let d = mean.len() as f64;
    mean.iter()
        .zip(logvar)
        .zip(target)
        .map(|((m, lv), t)| ((t - m) * (t - m) * (-lv).exp() + lv) / 2.0)
        .sum::<f64>()
        / d
}

struct ForwardCache {
    /// Input to each layer (`inputs[0]` is the batch itself).
    inputs: Vec<Array2<f64>>,
    raw_out: Array2<f64>,
}

impl Mlp {
    /// He-style init: truncated normal at 2σ with σ = √(2/fan_in), zero biases.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], state_dim: usize, rng: &mut R) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(2 * state_dim);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / fan_in as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= 2.0 {
                        break z * std;
                    }
                });
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.ncols() / 2)
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weight.ncols())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    /// Flat parameter view in layer order (weights then bias).
    pub fn flat(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn param(&self, index: usize) -> f64 {
        let mut i = index;
        for s in self.param_slices() {
            if i < s.len() {
                return s[i];
            }
            i -= s.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        for s in self.param_slices_mut() {
            if i < s.len() {
                s[i] = value;
                return;
            }
            i -= s.len();
        }
        panic!("parameter index {index} out of range");
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: cols,
                context: "network input",
            });
        }
        Ok(())
    }

    fn forward_cached(&self, x: ArrayView2<f64>) -> ForwardCache {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            inputs.push(h);
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        ForwardCache { inputs, raw_out: h }
    }

    fn split_heads(&self, raw_out: &Array2<f64>) -> GaussianBatch {
        let d = self.state_dim();
        GaussianBatch {
            mean: raw_out.slice(s![.., ..d]).to_owned(),
            logvar: raw_out.slice(s![.., d..]).mapv(|r| bound_logvar(r).0),
        }
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<GaussianBatch> {
        self.check_input(x.ncols())?;
        Ok(self.split_heads(&self.forward_cached(x).raw_out))
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let out = self.forward_batch(x)?;
        Ok((out.mean.row(0).to_vec(), out.logvar.row(0).to_vec()))
    }

    /// Mean NLL over a batch of delta targets.
    pub fn batch_loss(&self, x: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
        let out = self.forward_batch(x)?;
        let n = x.nrows() as f64;
        Ok(out
            .mean
            .outer_iter()
            .zip(out.logvar.outer_iter())
            .zip(targets.outer_iter())
            .map(|((m, lv), t)| {
                nll_loss(
                    m.as_slice().expect("row"),
                    lv.as_slice().expect("row"),
                    &t.to_vec(),
                )
            })
            .sum::<f64>()
            / n)
    }

    /// Batch-mean NLL and its exact gradient with respect to every parameter.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Mlp)> {
        self.check_input(x.ncols())?;
        let d = self.state_dim();
        if targets.ncols() != d || targets.nrows() != x.nrows() {
            return Err(Error::Dimension {
                expected: d,
                got: targets.ncols(),
                context: "network target",
            });
        }
        let n = x.nrows();
        let cache = self.forward_cached(x);
        let scale = 1.0 / (n as f64 * d as f64);

        let mut loss = 0.0;
        let mut delta = Array2::<f64>::zeros(cache.raw_out.raw_dim());
        for i in 0..n {
            for j in 0..d {
                let mean = cache.raw_out[[i, j]];
                let (lv, dlv) = bound_logvar(cache.raw_out[[i, d + j]]);
                let resid = targets[[i, j]] - mean;
                let inv_var = (-lv).exp();
                loss += (resid * resid * inv_var + lv) / 2.0;
                delta[[i, j]] = -resid * inv_var * scale;
                delta[[i, d + j]] = 0.5 * (1.0 - resid * resid * inv_var) * dlv * scale;
            }
        }
        loss *= scale;

        let mut grads = self.zeros_like();
        for k in (0..self.layers.len()).rev() {
            let input = &cache.inputs[k];
            grads.layers[k].weight = input.t().dot(&delta);
            grads.layers[k].bias = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut prev = delta.dot(&self.layers[k].weight.t());
                // inputs[k] is relu(z_{k-1}); its sign is the ReLU mask.
                Zip::from(&mut prev).and(input).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = prev;
            }
        }
        Ok((loss, grads))
    }

    /// Gradient of the single-sample NLL.
    pub fn backward(&self, input: &[f64], target: &[f64]) -> Result<Mlp> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let t = ArrayView2::from_shape((1, target.len()), target)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(self.loss_and_grad(x, t)?.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-5,
        }
    }
}

/// Adam moments with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first: Mlp,
    pub second: Mlp,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Mlp, config: AdamConfig) -> Self {
        AdamState {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut Mlp, grads: &Mlp) {
        self.step += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = c.lr * c.weight_decay;

        let mut params_s = params.param_slices_mut();
        let grads_s = grads.param_slices();
        let mut first_s = self.first.param_slices_mut();
        let mut second_s = self.second.param_slices_mut();
        for k in 0..params_s.len() {
            let p = &mut *params_s[k];
            let m = &mut *first_s[k];
            let v = &mut *second_s[k];
            for (((p, &g), m), v) in p.iter_mut().zip(grads_s[k]).zip(m.iter_mut()).zip(v.iter_mut()) {
                *p -= decay * *p;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
    }
}

/// Maximum relative error of `analytic` against central finite differences of
/// the single-sample loss, over all parameters or a seeded subset.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// coordinates whose true gradient is zero from dividing noise by noise.
pub fn compare_gradient(
    params: &Mlp,
    analytic: &Mlp,
    input: &[f64],
    target: &[f64],
    coords: Option<&[usize]>,
) -> Result<f64> {
    const H: f64 = 1e-5;
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..params.num_params()).collect();
            &all
        }
    };
    let loss_at = |p: &Mlp| -> Result<f64> {
        let (m, lv) = p.forward(input)?;
        Ok(nll_loss(&m, &lv, target))
    };
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let orig = params.param(i);
        probe.set_param(i, orig + H);
        let up = loss_at(&probe)?;
        probe.set_param(i, orig - H);
        let down = loss_at(&probe)?;
        probe.set_param(i, orig);
        let numeric = (up - down) / (2.0 * H);
        let a = analytic.param(i);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Checks `backward` against finite differences. Networks with more than 400
/// parameters are checked on a fixed pseudo-random subset of 200 coordinates.
pub fn grad_check(params: &Mlp, input: &[f64], target: &[f64]) -> Result<f64> {
    let analytic = params.backward(input, target)?;
    let n = params.num_params();
    if n <= 400 {
        return compare_gradient(params, &analytic, input, target, None);
    }
    let mut rng = crate::seed::stream(n as u64, &[0x6C4E]);
    let mut coords = sample(&mut rng, n, 200).into_vec();
    coords.sort_unstable();
    compare_gradient(params, &analytic, input, target, Some(&coords))
}

impl Mlp {
    pub fn write_text(&self, out: &mut String) {
        out.push_str(&format!(
            "{MODEL_MAGIC} layers={} state_dim={}\n",
            self.layers.len(),
            self.state_dim()
        ));
        for layer in &self.layers {
            out.push_str(&format!(
                "layer in={} out={}\n",
                layer.weight.nrows(),
                layer.weight.ncols()
            ));
            for row in layer.weight.outer_iter() {
                crate::textio::write_row(out, row.iter().copied());
            }
            crate::textio::write_row(out, layer.bias.iter().copied());
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_text(&mut s);
        s
    }

    pub(crate) fn read_text(cur: &mut LineCursor<'_>) -> Result<Self> {
        let header = cur.next_line()?;
        let line = cur.line_no();
        let fields = header_fields(header, MODEL_MAGIC).map_err(|_| {
            Error::format(line, format!("expected `{MODEL_MAGIC}` header"))
        })?;
        let n_layers = header_usize(&fields, "layers", line)?;
        let state_dim = header_usize(&fields, "state_dim", line)?;
        if n_layers == 0 {
            return Err(Error::format(line, "model has no layers"));
        }
        let mut layers = Vec::with_capacity(n_layers);
        let mut prev_out: Option<usize> = None;
        for _ in 0..n_layers {
            let spec = cur.next_line()?;
            let line = cur.line_no();
            let fields = spec
                .strip_prefix("layer ")
                .ok_or_else(|| Error::format(line, "expected `layer in=.. out=..`"))?;
            let fields: Vec<(&str, &str)> = fields
                .split_whitespace()
                .filter_map(|kv| kv.split_once('='))
                .collect();
            let fan_in = header_usize(&fields, "in", line)?;
            let fan_out = header_usize(&fields, "out", line)?;
            if let Some(p) = prev_out {
                if p != fan_in {
                    return Err(Error::Dimension { expected: p, got: fan_in, context: "layer fan-in" });
                }
            }
            prev_out = Some(fan_out);
            let mut weight = Array2::zeros((fan_in, fan_out));
            for r in 0..fan_in {
                let row = cur.next_row(fan_out)?;
                weight.row_mut(r).assign(&Array1::from(row));
            }
            let bias = Array1::from(cur.next_row(fan_out)?);
            layers.push(Layer { weight, bias });
        }
        let mlp = Mlp { layers };
        if mlp.state_dim() != state_dim || mlp.layers.last().map(|l| l.weight.ncols() % 2) != Some(0) {
            return Err(Error::Dimension {
                expected: state_dim * 2,
                got: mlp.layers.last().map_or(0, |l| l.weight.ncols()),
                context: "model output width",
            });
        }
        Ok(mlp)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cur = LineCursor::new(text)?;
        let m = Self::read_text(&mut cur)?;
        if !cur.is_done() {
            return Err(Error::format(cur.line_no() + 1, "trailing content after model"));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;

    fn small_net(seed: u64) -> (Mlp, Vec<f64>, Vec<f64>) {
        let mut rng = seed::stream(seed, &[1]);
        let net = Mlp::new(2, &[4], 1, &mut rng);
        let input: Vec<f64> = (0..2).map(|_| rng.random_range(-1.5..1.5)).collect();
        let target = vec![rng.random_range(-1.0..1.0)];
        (net, input, target)
    }

    #[test]
    fn zero_network_outputs() {
        let net = Mlp::new(5, &[8, 8], 4, &mut seed::stream(0, &[])).zeros_like();
        let (mean, lv) = net.forward(&[0.3, -1.0, 2.0, 0.0, 1.0]).unwrap();
        assert_eq!(mean, vec![0.0; 4]);
        let expected = bound_logvar(0.0).0;
        assert!(lv.iter().all(|&v| v == expected));
        assert!(expected > LOGVAR_MIN && expected < LOGVAR_MAX);
    }

    #[test]
    fn forward_matches_straight_line_reference() {
        let mut rng = seed::stream(42, &[]);
        let net = Mlp::new(3, &[5, 4], 2, &mut rng);
        let input = [0.25, -0.7, 1.3];
        // Independent scalar-loop evaluation.
        let mut h = input.to_vec();
        for (k, layer) in net.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.weight.ncols()];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = layer.bias[j];
                for (i, hi) in h.iter().enumerate() {
                    *zj += hi * layer.weight[[i, j]];
                }
                if k + 1 < net.layers.len() {
                    *zj = zj.max(0.0);
                }
            }
            h = z;
        }
        let (mean, lv) = net.forward(&input).unwrap();
        for j in 0..2 {
            assert!((mean[j] - h[j]).abs() < 1e-12);
            let raw = h[2 + j];
            let upper = 4.0 - (1.0 + (4.0 - raw).exp()).ln();
            let bounded = -10.0 + (1.0 + (upper + 10.0).exp()).ln();
            assert!((lv[j] - bounded).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Mlp::new(3, &[4], 1, &mut seed::stream(0, &[]));
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn logvar_bound_for_moderate_raw_values() {
        for i in -300..=150 {
            let raw = i as f64 * 0.1;
            let (lv, d) = bound_logvar(raw);
            assert!(lv > LOGVAR_MIN && lv < LOGVAR_MAX, "raw {raw} -> {lv}");
            assert!(d > 0.0 && d <= 1.0);
        }
        // Extreme inputs saturate at the bounds up to the softplus overshoot.
        assert!(bound_logvar(1e6).0 <= LOGVAR_MAX + 1e-6);
        assert!(bound_logvar(-1e6).0 >= LOGVAR_MIN);
    }

    #[test]
    fn nll_examples() {
        assert_eq!(nll_loss(&[1.0], &[0.0], &[1.0]), 0.0);
        assert_eq!(nll_loss(&[2.0], &[0.0], &[1.0]), 0.5);
        assert_eq!(nll_loss(&[1.0], &[2.0], &[1.0]), 1.0);
    }

    #[test]
    fn nll_convex_in_logvar_with_minimum_at_log_sq_error() {
        let err: f64 = 0.7;
        let grid: Vec<f64> = (0..2001).map(|i| -6.0 + i as f64 * 0.005).collect();
        let losses: Vec<f64> = grid.iter().map(|&lv| nll_loss(&[0.0], &[lv], &[err])).collect();
        for w in losses.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-12);
        }
        let best = grid[losses
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0];
        assert!((best - (err * err).ln()).abs() <= 0.005);
    }

    #[test]
    fn zero_residual_kills_mean_gradient() {
        let mut rng = seed::stream(3, &[]);
        let mut net = Mlp::new(2, &[4], 1, &mut rng);
        let input = [0.4, -0.2];
        let (mean, _) = net.forward(&input).unwrap();
        // Move the raw log-variance to the middle of the bounds.
        let last = net.layers.len() - 1;
        net.layers[last].weight.column_mut(1).fill(0.0);
        net.layers[last].bias[1] = (LOGVAR_MIN + LOGVAR_MAX) / 2.0;
        let g = net.backward(&input, &mean).unwrap();
        assert!(g.layers[last].weight.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(g.layers[last].bias[0], 0.0);
    }

    #[test]
    fn batch_gradient_is_mean_of_samples() {
        let mut rng = seed::stream(9, &[]);
        let net = Mlp::new(3, &[6, 5], 2, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
        let (_, batch) = net.loss_and_grad(x.view(), t.view()).unwrap();
        let mut acc = vec![0.0; net.num_params()];
        for i in 0..4 {
            let g = net.backward(&x.row(i).to_vec(), &t.row(i).to_vec()).unwrap();
            for (a, v) in acc.iter_mut().zip(g.flat()) {
                *a += v / 4.0;
            }
        }
        for (a, b) in acc.iter().zip(batch.flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_loss_matches_loss_and_grad() {
        let mut rng = seed::stream(10, &[]);
        let net = Mlp::new(3, &[6], 2, &mut rng);
        let x = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0));
        let a = net.batch_loss(x.view(), t.view()).unwrap();
        let (b, _) = net.loss_and_grad(x.view(), t.view()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn grad_check_small_net() {
        let (net, input, target) = small_net(1);
        let err = grad_check(&net, &input, &target).unwrap();
        assert!(err < 1e-4, "relative error {err}");
        assert_eq!(err, grad_check(&net, &input, &target).unwrap());
    }

    #[test]
    fn grad_check_detects_corruption() {
        let (net, input, target) = small_net(2);
        let mut g = net.backward(&input, &target).unwrap();
        let i = g.num_params() - 1;
        g.set_param(i, g.param(i) + 0.5);
        assert!(compare_gradient(&net, &g, &input, &target, None).unwrap() > 1e-2);
    }

    #[test]
    fn grad_check_large_net_uses_subset() {
        let mut rng = seed::stream(4, &[]);
        let net = Mlp::new(5, &[32, 32], 4, &mut rng);
        let err = grad_check(&net, &[0.1, -0.4, 0.9, 0.3, -1.2], &[0.05, -0.1, 0.2, 0.0]).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn gradient_agrees_with_finite_differences(seed in 0u64..10_000) {
            let mut rng = seed::stream(seed, &[2]);
            let net = Mlp::new(2, &[4], 2, &mut rng);
            let input: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let target: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            prop_assert!(grad_check(&net, &input, &target).unwrap() < 1e-4);
        }
    }

    #[test]
    fn adam_zero_gradient_without_decay_is_noop() {
        let mut net = Mlp::new(2, &[3], 1, &mut seed::stream(5, &[]));
        let before = net.clone();
        let mut adam = AdamState::new(&net, AdamConfig { weight_decay: 0.0, ..Default::default() });
        adam.step(&mut net, &before.zeros_like());
        assert_eq!(net, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_first_step_matches_hand_evaluation() {
        let mut net = Mlp::new(2, &[3], 1, &mut seed::stream(6, &[]));
        let before = net.clone();
        let mut grads = net.zeros_like();
        let n = net.num_params();
        for i in 0..n {
            grads.set_param(i, (i as f64 - 5.0) * 0.37);
        }
        let cfg = AdamConfig::default();
        AdamState::new(&net, cfg).step(&mut net, &grads);
        for i in 0..n {
            let g = grads.param(i);
            let p = before.param(i) * (1.0 - cfg.lr * cfg.weight_decay);
            // m̂ = g, v̂ = g² after bias correction on the first step.
            let m_hat = (0.1 * g) / 0.1;
            let v_hat = (0.001 * g * g) / (1.0 - 0.999);
            let expected = p - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            assert!((net.param(i) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let (net, input, target) = small_net(7);
        let run = || {
            let mut p = net.clone();
            let mut adam = AdamState::new(&p, AdamConfig::default());
            for _ in 0..2 {
                let g = p.backward(&input, &target).unwrap();
                adam.step(&mut p, &g);
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Mlp::new(5, &[7, 6], 4, &mut seed::stream(8, &[]));
        let text = net.to_text();
        assert!(text.starts_with("#ugcem-model-v1 layers=3 state_dim=4\n"));
        assert_eq!(Mlp::from_text(&text).unwrap(), net);
        assert!(Mlp::from_text(&text[..text.len() - 3]).is_err());
        assert!(Mlp::from_text(&text.replacen("in=7", "in=8", 1)).is_err());
    }
}
