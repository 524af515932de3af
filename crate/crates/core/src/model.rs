//! MLP velocity field with hand-written backpropagation and an Adam trainer.
//!
//! Input is `[z, t, sin(2πt·2^j), cos(2πt·2^j) for j < k]`; hidden layers use SiLU and the
//! output layer is linear. Parameters are stored flat, layer by layer, each layer as its
//! `out × in` weight matrix (row-major) followed by its `out` biases.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{make_training_pair, VelocityField};
use crate::oracle::ProbeGrid;
use crate::prior::rng_from_seed;

const CHECKPOINT_MAGIC: &str = "mirrorflow-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Silu,
}

/// Hidden widths and time-embedding size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    /// Number `k` of sinusoidal frequency pairs.
    pub time_frequencies: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden: vec![128; 4],
            time_frequencies: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpVelocity {
    layer_dims: Vec<usize>,
    params: Vec<f64>,
    time_frequencies: usize,
    activation: Activation,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl MlpVelocity {
    /// Zero parameters: the field is identically zero.
    pub fn zeros(data_dim: usize, arch: &Architecture) -> Self {
        let input = data_dim + 1 + 2 * arch.time_frequencies;
        let mut layer_dims = vec![input];
        layer_dims.extend_from_slice(&arch.hidden);
        layer_dims.push(data_dim);
        let n = param_count(&layer_dims);
        MlpVelocity {
            layer_dims,
            params: vec![0.0; n],
            time_frequencies: arch.time_frequencies,
            activation: Activation::Silu,
        }
    }

    /// He-style initialization `N(0, 2/fan_in)` for hidden layers; zero biases and a zero
    /// output layer, so the initial field is 0.
    pub fn new(data_dim: usize, arch: &Architecture, seed: u64) -> Self {
        let mut m = Self::zeros(data_dim, arch);
        let mut rng = rng_from_seed(seed);
        let n_layers = m.n_layers();
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (m.layer_dims[l], m.layer_dims[l + 1]);
            if l + 1 < n_layers {
                let std = (2.0 / fan_in as f64).sqrt();
                for w in &mut m.params[offset..offset + fan_in * fan_out] {
                    *w = std * rng.sample::<f64, _>(StandardNormal);
                }
            }
            offset += (fan_in + 1) * fan_out;
        }
        m
    }

    /// Every parameter drawn `N(0, 1/fan_in)`, including the output layer. For gradient checks.
    pub fn random(data_dim: usize, arch: &Architecture, seed: u64) -> Self {
        let mut m = Self::zeros(data_dim, arch);
        let mut rng = rng_from_seed(seed);
        let mut offset = 0;
        for l in 0..m.n_layers() {
            let (fan_in, fan_out) = (m.layer_dims[l], m.layer_dims[l + 1]);
            let std = (1.0 / fan_in as f64).sqrt();
            for w in &mut m.params[offset..offset + (fan_in + 1) * fan_out] {
                *w = std * rng.sample::<f64, _>(StandardNormal);
            }
            offset += (fan_in + 1) * fan_out;
        }
        m
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn time_frequencies(&self) -> usize {
        self.time_frequencies
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn time_features(&self) -> usize {
        1 + 2 * self.time_frequencies
    }

    pub fn data_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least one layer")
    }

    fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    fn embed(&self, z: &[f64], t: f64, out: &mut [f64]) {
        let d = z.len();
        out[..d].copy_from_slice(z);
        out[d] = t;
        for j in 0..self.time_frequencies {
            let w = 2.0 * std::f64::consts::PI * t * (1u64 << j) as f64;
            out[d + 1 + 2 * j] = w.sin();
            out[d + 2 + 2 * j] = w.cos();
        }
    }

    /// Embedded inputs, `n × input`.
    fn embed_batch(&self, zs: &[f64], ts: &[f64]) -> Vec<f64> {
        let d = self.data_dim();
        let input = self.layer_dims[0];
        let mut x = vec![0.0; ts.len() * input];
        for ((row, z), &t) in x.chunks_exact_mut(input).zip(zs.chunks_exact(d)).zip(ts) {
            self.embed(z, t, row);
        }
        x
    }

    /// Runs the network, keeping every layer's pre-activation and output.
    fn forward_cached(&self, x0: Vec<f64>, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut post = Vec::with_capacity(self.n_layers() + 1);
        post.push(x0);
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            offset += (fan_in + 1) * fan_out;
            let input = post.last().expect("input layer");
            let mut y = vec![0.0; n * fan_out];
            for row in y.chunks_exact_mut(fan_out) {
                row.copy_from_slice(b);
            }
            // y (n×out) += x (n×in) · Wᵀ (in×out)
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    fan_in,
                    fan_out,
                    1.0,
                    input.as_ptr(),
                    fan_in as isize,
                    1,
                    w.as_ptr(),
                    1,
                    fan_in as isize,
                    1.0,
                    y.as_mut_ptr(),
                    fan_out as isize,
                    1,
                );
            }
            if l + 1 < self.n_layers() {
                let act: Vec<f64> = y.iter().map(|&v| v * sigmoid(v)).collect();
                pre.push(y);
                post.push(act);
            } else {
                pre.push(Vec::new());
                post.push(y);
            }
        }
        (pre, post)
    }

    fn check_inputs(&self, zs: &[f64], ts: &[f64]) -> Result<()> {
        let d = self.data_dim();
        if zs.len() != ts.len() * d {
            return Err(Error::Dimension {
                expected: ts.len() * d,
                got: zs.len(),
            });
        }
        if let Some(i) = ts.iter().position(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Precondition(format!("time {} at row {i} outside [0, 1]", ts[i])));
        }
        if let Some(i) = zs.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite input at row {}", i / d)));
        }
        Ok(())
    }

    pub fn forward(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.data_dim()];
        self.forward_batch(z, &[t], &mut out)?;
        Ok(out)
    }

    /// Rows of `zs` evaluated at the matching entries of `ts`.
    pub fn forward_batch(&self, zs: &[f64], ts: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_inputs(zs, ts)?;
        let x0 = self.embed_batch(zs, ts);
        let (_, mut post) = self.forward_cached(x0, ts.len());
        out.copy_from_slice(&post.pop().expect("output layer"));
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        Ok(())
    }

    /// Mean over the batch of `‖v(z_t, t) − target‖²`, and its gradient in the parameters.
    pub fn loss_and_grad(&self, batch: &TrainingBatch) -> Result<(f64, Vec<f64>)> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::Precondition("empty training batch".into()));
        }
        self.check_inputs(&batch.z_t, &batch.t)?;
        let d = self.data_dim();
        let x0 = self.embed_batch(&batch.z_t, &batch.t);
        let (pre, post) = self.forward_cached(x0, n);
        let out = post.last().expect("output layer");

        let mut loss = 0.0;
        let mut delta = vec![0.0; n * d];
        let scale = 2.0 / n as f64;
        for (s, ((o, y), dl)) in out
            .chunks_exact(d)
            .zip(batch.target.chunks_exact(d))
            .zip(delta.chunks_exact_mut(d))
            .enumerate()
        {
            let mut sq = 0.0;
            for j in 0..d {
                let r = o[j] - y[j];
                sq += r * r;
                dl[j] = scale * r;
            }
            if !sq.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at sample {s}")));
            }
            loss += sq;
        }
        loss /= n as f64;

        let mut grad = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(self.n_layers());
        let mut offset = 0;
        for l in 0..self.n_layers() {
            offsets.push(offset);
            offset += (self.layer_dims[l] + 1) * self.layer_dims[l + 1];
        }
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let off = offsets[l];
            let input = &post[l];
            {
                let (gw, gb) = grad[off..off + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
                // dW (out×in) = δᵀ (out×n) · x (n×in)
                unsafe {
                    matrixmultiply::dgemm(
                        fan_out,
                        n,
                        fan_in,
                        1.0,
                        delta.as_ptr(),
                        1,
                        fan_out as isize,
                        input.as_ptr(),
                        fan_in as isize,
                        1,
                        0.0,
                        gw.as_mut_ptr(),
                        fan_in as isize,
                        1,
                    );
                }
                for row in delta.chunks_exact(fan_out) {
                    for (g, dv) in gb.iter_mut().zip(row) {
                        *g += dv;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // δ_prev (n×in) = δ (n×out) · W (out×in), then through SiLU'.
            let w = &self.params[off..off + fan_in * fan_out];
            let mut prev = vec![0.0; n * fan_in];
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    fan_out,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    fan_out as isize,
                    1,
                    w.as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    prev.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            for (p, &a) in prev.iter_mut().zip(&pre[l - 1]) {
                let s = sigmoid(a);
                *p *= s * (1.0 + a * (1.0 - s));
            }
            delta = prev;
        }
        Ok((loss, grad))
    }

    /// Writes the checkpoint: a text header, then one parameter per line with 17
    /// significant digits.
    pub fn save_params(&self, path: &Path) -> Result<()> {
        fs::write(path, self.checkpoint_string())?;
        Ok(())
    }

    pub fn checkpoint_string(&self) -> String {
        let mut s = String::with_capacity(self.params.len() * 26 + 128);
        let dims: Vec<String> = self.layer_dims.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
        let _ = writeln!(s, "layer_dims {}", dims.join(" "));
        let _ = writeln!(s, "time_features {}", self.time_features());
        let _ = writeln!(s, "activation silu");
        let _ = writeln!(s, "params {}", self.params.len());
        for p in &self.params {
            let _ = writeln!(s, "{p:.16e}");
        }
        s
    }

    /// Reads a checkpoint, taking the shape from its header.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_checkpoint_str(&text)
    }

    /// Reads a checkpoint into `self`; the stored shape must match.
    pub fn load_params(&mut self, path: &Path) -> Result<()> {
        let loaded = Self::load(path)?;
        if loaded.layer_dims != self.layer_dims || loaded.time_frequencies != self.time_frequencies {
            return Err(Error::Format(format!(
                "checkpoint has layer_dims {:?}, model expects {:?}",
                loaded.layer_dims, self.layer_dims
            )));
        }
        self.params = loaded.params;
        Ok(())
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let fmt = |m: &str| Error::Format(m.to_string());
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| fmt(&format!("missing {key} line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(fmt(&format!("expected {key} line, got {line:?}")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let version = header(CHECKPOINT_MAGIC)?;
        if version != [CHECKPOINT_VERSION.to_string()] {
            return Err(fmt(&format!("unsupported checkpoint version {version:?}")));
        }
        let layer_dims: Vec<usize> = header("layer_dims")?
            .iter()
            .map(|s| s.parse().map_err(|_| fmt("bad layer_dims")))
            .collect::<Result<_>>()?;
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(fmt("layer_dims needs at least two positive entries"));
        }
        let time_features: usize = header("time_features")?
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt("bad time_features"))?;
        if time_features % 2 == 0 || layer_dims[0] != layer_dims[layer_dims.len() - 1] + time_features {
            return Err(fmt("time_features inconsistent with layer_dims"));
        }
        if header("activation")? != ["silu"] {
            return Err(fmt("unsupported activation"));
        }
        let count: usize = header("params")?
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt("bad params count"))?;
        if count != param_count(&layer_dims) {
            return Err(fmt(&format!(
                "params count {count} does not match layer_dims ({})",
                param_count(&layer_dims)
            )));
        }
        let params: Vec<f64> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| fmt(&format!("bad parameter {l:?}"))))
            .collect::<Result<_>>()?;
        if params.len() != count {
            return Err(fmt(&format!("expected {count} parameters, found {}", params.len())));
        }
        Ok(MlpVelocity {
            layer_dims,
            params,
            time_frequencies: (time_features - 1) / 2,
            activation: Activation::Silu,
        })
    }
}

impl VelocityField for MlpVelocity {
    fn dim(&self) -> usize {
        self.data_dim()
    }

    fn velocity(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        self.forward(z, t)
    }

    fn velocity_batch(&self, zs: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let n = zs.len() / self.data_dim();
        self.forward_batch(zs, &vec![t; n], out)
    }
}

/// Regression examples `(z_t, t, target)`, row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingBatch {
    pub z_t: Vec<f64>,
    pub t: Vec<f64>,
    pub target: Vec<f64>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push(&mut self, z_t: &[f64], t: f64, target: &[f64]) {
        self.z_t.extend_from_slice(z_t);
        self.t.push(t);
        self.target.extend_from_slice(target);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Learning rate at the last step relative to the first (cosine schedule).
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            steps: 2000,
            grad_clip_norm: 10.0,
            seed: 0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            final_lr_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad(format!("grad_clip_norm must be positive, got {}", self.grad_clip_norm));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) || !(self.adam_eps > 0.0) {
            return bad("adam parameters out of range".into());
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return bad("final_lr_fraction must lie in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    /// Mean batch loss over the last 5% of steps.
    pub final_loss: f64,
    /// `(step, batch loss)` every `max(1, steps/200)` steps.
    pub loss_curve: Vec<(usize, f64)>,
    /// Mean `‖v̂ − v‖²` against an exact field over a probe grid.
    pub velocity_mse_vs_oracle: Option<f64>,
    /// Same, along the interpolation marginal `Z_t` with `t` uniform on `[0, T]`.
    pub velocity_mse_interpolation: Option<f64>,
}

/// Supplies independent `(z₀, z₁)` couples.
pub trait PairProvider {
    fn dim(&self) -> usize;
    fn draw_pair(&mut self, rng: &mut ChaCha8Rng, z0: &mut [f64], z1: &mut [f64]);
}

/// Adam on the flow-matching loss with fresh couples every step and `t ~ U[0, 1]`.
///
/// With `steps = 0` the model is returned unchanged and the report holds the loss of
/// a single evaluation batch.
pub fn train<P: PairProvider + ?Sized>(
    mut model: MlpVelocity,
    cfg: &TrainConfig,
    provider: &mut P,
) -> Result<(MlpVelocity, TrainReport)> {
    cfg.validate()?;
    let d = model.data_dim();
    if provider.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: provider.dim(),
        });
    }
    let mut rng = rng_from_seed(cfg.seed);
    let n_params = model.params.len();
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let (b1, b2) = cfg.adam_betas;
    let every = (cfg.steps / 200).max(1);
    let mut curve = Vec::new();
    let tail_start = cfg.steps - (cfg.steps / 20).max(1).min(cfg.steps);
    let mut tail_sum = 0.0;
    let mut tail_count = 0usize;
    let mut initial_loss = f64::NAN;

    let mut z0 = vec![0.0; d];
    let mut z1 = vec![0.0; d];
    let mut draw_batch = |rng: &mut ChaCha8Rng| {
        let mut batch = TrainingBatch::default();
        for _ in 0..cfg.batch_size {
            provider.draw_pair(rng, &mut z0, &mut z1);
            let t: f64 = rng.random();
            let (zt, target) = make_training_pair(&z0, &z1, t);
            batch.push(&zt, t, &target);
        }
        batch
    };

    if cfg.steps == 0 {
        let batch = draw_batch(&mut rng);
        let (loss, _) = model.loss_and_grad(&batch)?;
        let report = TrainReport {
            initial_loss: loss,
            final_loss: loss,
            loss_curve: vec![(0, loss)],
            velocity_mse_vs_oracle: None,
            velocity_mse_interpolation: None,
        };
        return Ok((model, report));
    }

    for step in 0..cfg.steps {
        let batch = draw_batch(&mut rng);
        let (loss, mut grad) = model
            .loss_and_grad(&batch)
            .map_err(|e| Error::Training { step, reason: e.to_string() })?;
        if !loss.is_finite() {
            return Err(Error::Training {
                step,
                reason: "loss is NaN".into(),
            });
        }
        if step == 0 {
            initial_loss = loss;
        }
        if step % every == 0 {
            curve.push((step, loss));
        }
        if step >= tail_start {
            tail_sum += loss;
            tail_count += 1;
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm > cfg.grad_clip_norm {
            let s = cfg.grad_clip_norm / gnorm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
        let progress = step as f64 / cfg.steps.max(2).saturating_sub(1) as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        let lr = cfg.learning_rate * (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * cosine);
        let k = (step + 1) as i32;
        let c1 = 1.0 - b1.powi(k);
        let c2 = 1.0 - b2.powi(k);
        for (((p, g), a), b) in model.params.iter_mut().zip(&grad).zip(&mut m1).zip(&mut m2) {
            *a = b1 * *a + (1.0 - b1) * g;
            *b = b2 * *b + (1.0 - b2) * g * g;
            *p -= lr * (*a / c1) / ((*b / c2).sqrt() + cfg.adam_eps);
        }
    }
    let report = TrainReport {
        initial_loss,
        final_loss: tail_sum / tail_count.max(1) as f64,
        loss_curve: curve,
        velocity_mse_vs_oracle: None,
        velocity_mse_interpolation: None,
    };
    Ok((model, report))
}

/// Mean `‖a(z,t) − b(z,t)‖²` over the probe grid and its times `0..=T`.
pub fn velocity_mse_on_grid<A, B>(a: &A, b: &B, grid: &ProbeGrid, horizon: f64) -> Result<f64>
where
    A: VelocityField + ?Sized,
    B: VelocityField + ?Sized,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for t in grid.times(horizon) {
        for p in &grid.points {
            let va = a.velocity(p, t)?;
            let vb = b.velocity(p, t)?;
            total += va.iter().zip(&vb).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}

/// Mean `‖a − b‖²` at `(Z_t, t)` with couples from `provider` and `t ~ U[0, T]`.
pub fn velocity_mse_on_interpolation<A, B, P>(
    a: &A,
    b: &B,
    provider: &mut P,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<f64>
where
    A: VelocityField + ?Sized,
    B: VelocityField + ?Sized,
    P: PairProvider + ?Sized,
{
    let d = provider.dim();
    let mut rng = rng_from_seed(seed);
    let mut z0 = vec![0.0; d];
    let mut z1 = vec![0.0; d];
    let mut total = 0.0;
    for _ in 0..n {
        provider.draw_pair(&mut rng, &mut z0, &mut z1);
        let t = horizon * rng.random::<f64>();
        let (zt, _) = make_training_pair(&z0, &z1, t);
        let va = a.velocity(&zt, t)?;
        let vb = b.velocity(&zt, t)?;
        total += va.iter().zip(&vb).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    }
    Ok(total / n.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> Architecture {
        Architecture {
            hidden: vec![8, 8],
            time_frequencies: 2,
        }
    }

    fn random_batch(d: usize, n: usize, seed: u64) -> TrainingBatch {
        let mut rng = rng_from_seed(seed);
        let mut b = TrainingBatch::default();
        for _ in 0..n {
            let z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            b.push(&z, rng.random(), &y);
        }
        b
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = MlpVelocity::new(2, &Architecture::default(), 1);
        assert_eq!(m.forward(&[3.0, -1.0], 0.3).unwrap(), vec![0.0, 0.0]);
        let z = MlpVelocity::zeros(2, &small_arch());
        let mut batch = TrainingBatch::default();
        batch.push(&[1.0, 2.0], 0.5, &[0.0, 0.0]);
        let (loss, grad) = z.loss_and_grad(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn parameter_count_matches_layers() {
        let m = MlpVelocity::zeros(3, &small_arch());
        assert_eq!(m.layer_dims(), &[3 + 5, 8, 8, 3]);
        assert_eq!(m.params().len(), 9 * 8 + 9 * 8 + 9 * 3);
    }

    #[test]
    fn forward_is_pure() {
        let m = MlpVelocity::random(2, &small_arch(), 4);
        assert_eq!(m.forward(&[0.3, 0.1], 0.7).unwrap(), m.forward(&[0.3, 0.1], 0.7).unwrap());
        assert!(matches!(m.forward(&[f64::NAN, 0.0], 0.1), Err(Error::Numeric(_))));
        assert!(matches!(m.forward(&[0.0, 0.0], 1.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn batched_forward_matches_single() {
        let m = MlpVelocity::random(2, &small_arch(), 5);
        let zs = [0.1, 0.2, -1.0, 3.0, 0.5, 0.5];
        let ts = [0.0, 0.5, 0.9];
        let mut out = vec![0.0; 6];
        m.forward_batch(&zs, &ts, &mut out).unwrap();
        for i in 0..3 {
            let single = m.forward(&zs[2 * i..2 * i + 2], ts[i]).unwrap();
            assert!((single[0] - out[2 * i]).abs() < 1e-14 && (single[1] - out[2 * i + 1]).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..3 {
            let m = MlpVelocity::random(2, &small_arch(), seed);
            let batch = random_batch(2, 16, 100 + seed);
            let (_, grad) = m.loss_and_grad(&batch).unwrap();
            let eps = 1e-6;
            for i in 0..m.params().len() {
                let mut plus = m.clone();
                plus.params_mut()[i] += eps;
                let mut minus = m.clone();
                minus.params_mut()[i] -= eps;
                let fd = (plus.loss_and_grad(&batch).unwrap().0 - minus.loss_and_grad(&batch).unwrap().0) / (2.0 * eps);
                let tol = 1e-4 * fd.abs().max(grad[i].abs()) + 1e-8;
                assert!((fd - grad[i]).abs() <= tol, "param {i}: fd {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn duplicated_batch_has_same_loss_and_grad() {
        let m = MlpVelocity::random(2, &small_arch(), 9);
        let b = random_batch(2, 10, 3);
        let mut doubled = b.clone();
        doubled.z_t.extend_from_slice(&b.z_t);
        doubled.t.extend_from_slice(&b.t);
        doubled.target.extend_from_slice(&b.target);
        let (l1, g1) = m.loss_and_grad(&b).unwrap();
        let (l2, g2) = m.loss_and_grad(&doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12 * l1.abs().max(1.0));
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
        assert!(matches!(m.loss_and_grad(&TrainingBatch::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn non_finite_loss_names_the_sample() {
        let m = MlpVelocity::random(1, &small_arch(), 1);
        let mut b = TrainingBatch::default();
        b.push(&[0.0], 0.1, &[0.0]);
        b.push(&[0.0], 0.1, &[f64::INFINITY]);
        assert_eq!(m.loss_and_grad(&b).unwrap_err(), Error::Numeric("non-finite loss at sample 1".into()));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = MlpVelocity::random(3, &small_arch(), 2);
        m.save_params(&path).unwrap();
        let mut back = MlpVelocity::zeros(3, &small_arch());
        back.load_params(&path).unwrap();
        assert_eq!(back, m);

        let mut wrong = MlpVelocity::zeros(3, &Architecture { hidden: vec![8, 4], time_frequencies: 2 });
        assert!(matches!(wrong.load_params(&path), Err(Error::Format(_))));

        let text = fs::read_to_string(&path).unwrap();
        let cut = &text[..text.len() - 60];
        fs::write(&path, cut).unwrap();
        assert!(matches!(MlpVelocity::load(&path), Err(Error::Format(_))));
    }
}
