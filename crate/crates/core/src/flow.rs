//! Mirror flow matching: straight-line couples, dual-space training, early-stopped Euler
//! sampling and the pullback to the primal domain.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::{BatchMeta, SampleBatch, Space};
use crate::error::{Error, Result};
use crate::geometry::MirrorMap;
use crate::model::{train, Architecture, MlpVelocity, PairProvider, TrainConfig, TrainReport};
use crate::prior::Prior;

/// A time-dependent vector field on `ℝ^d`.
pub trait VelocityField {
    fn dim(&self) -> usize;

    fn velocity(&self, z: &[f64], t: f64) -> Result<Vec<f64>>;

    /// Evaluates every row of `zs` at the common time `t`.
    fn velocity_batch(&self, zs: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        for (z, o) in zs.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            o.copy_from_slice(&self.velocity(z, t)?);
        }
        Ok(())
    }
}

impl<V: VelocityField + ?Sized> VelocityField for &V {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn velocity(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        (**self).velocity(z, t)
    }

    fn velocity_batch(&self, zs: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        (**self).velocity_batch(zs, t, out)
    }
}

/// The field `v ≡ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZeroVelocity {
    pub dim: usize,
}

impl VelocityField for ZeroVelocity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, _z: &[f64], _t: f64) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.dim])
    }
}

/// `(z_t, target)` with `z_t = (1−t)z₀ + t z₁` and `target = z₁ − z₀`.
pub fn make_training_pair(z0: &[f64], z1: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let zt = z0.iter().zip(z1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
    let target = z0.iter().zip(z1).map(|(a, b)| b - a).collect();
    (zt, target)
}

/// Euler step `h` and early-stopping time `T`, with `1/h` and `T/h` integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub h: f64,
    #[serde(rename = "t_stop")]
    pub horizon: f64,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

const DIVISIBILITY_TOL: f64 = 1e-9;

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let k = r.round();
    ((r - k).abs() <= DIVISIBILITY_TOL * k.max(1.0) && k >= 1.0).then_some(k as usize)
}

impl SamplerConfig {
    pub fn new(h: f64, horizon: f64, n: usize, seed: u64) -> Result<Self> {
        let cfg = SamplerConfig { h, horizon, n, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(Error::InvalidParameter(format!("step size h must lie in (0, 1), got {}", self.h)));
        }
        if integer_ratio(1.0, self.h).is_none() {
            return Err(Error::InvalidParameter(format!("1/h must be an integer, got h = {}", self.h)));
        }
        if !(self.horizon > 0.0 && self.horizon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "early-stopping time must lie in (0, 1), got {}",
                self.horizon
            )));
        }
        if integer_ratio(self.horizon, self.h).is_none() {
            return Err(Error::InvalidParameter(format!(
                "T/h must be an integer, got T = {}, h = {}",
                self.horizon, self.h
            )));
        }
        Ok(())
    }

    /// Number of Euler steps `T/h`.
    pub fn steps(&self) -> usize {
        integer_ratio(self.horizon, self.h).expect("validated config")
    }
}

/// Integrates `dz = v(z,t) dt` with explicit Euler from `z` at `t = 0` to `t = steps·h`.
pub fn euler_integrate<V: VelocityField + ?Sized>(v: &V, start: Vec<f64>, h: f64, steps: usize) -> Result<Vec<f64>> {
    let d = v.dim();
    let mut z = start;
    let mut vel = vec![0.0; z.len()];
    for k in 0..steps {
        let t = k as f64 * h;
        v.velocity_batch(&z, t, &mut vel)?;
        for (zj, vj) in z.iter_mut().zip(&vel) {
            *zj += h * vj;
        }
        if let Some(pos) = z.iter().position(|x| !x.is_finite()) {
            return Err(Error::Integration {
                trajectory: pos / d,
                step: k,
            });
        }
    }
    Ok(z)
}

/// `n` prior draws pushed through `T/h` Euler steps of `v`, evaluated at `t_k = kh`.
pub fn euler_sample<V: VelocityField + ?Sized>(v: &V, cfg: &SamplerConfig, prior: &Prior) -> Result<SampleBatch> {
    cfg.validate()?;
    if v.dim() != prior.dim() {
        return Err(Error::Dimension {
            expected: v.dim(),
            got: prior.dim(),
        });
    }
    let start = prior.sample(cfg.n, cfg.seed).into_data();
    let z = euler_integrate(v, start, cfg.h, cfg.steps())?;
    let meta = BatchMeta::new(
        Some(cfg.seed),
        format!("euler(h={}, T={}) from {}", cfg.h, cfg.horizon, prior_name(prior)),
    );
    SampleBatch::new(z, v.dim(), Space::Dual, meta)
}

fn prior_name(prior: &Prior) -> String {
    match prior {
        Prior::Gaussian { .. } => "gaussian".into(),
        Prior::StudentT(p) => format!("student_t(nu={})", p.nu),
    }
}

/// Independent couples: `z₀` from the prior, `z₁` resampled with replacement from data.
pub struct DataPairs<'a> {
    prior: &'a Prior,
    data: &'a SampleBatch,
}

impl<'a> DataPairs<'a> {
    pub fn new(prior: &'a Prior, data: &'a SampleBatch) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Precondition("training data is empty".into()));
        }
        if data.dim() != prior.dim() {
            return Err(Error::Dimension {
                expected: prior.dim(),
                got: data.dim(),
            });
        }
        Ok(DataPairs { prior, data })
    }
}

impl PairProvider for DataPairs<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn draw_pair(&mut self, rng: &mut ChaCha8Rng, z0: &mut [f64], z1: &mut [f64]) {
        self.prior.draw(rng, z0);
        let i = rng.random_range(0..self.data.len());
        z1.copy_from_slice(self.data.row(i));
    }
}

/// Pushes primal data through `∇Ψ`.
pub fn push_forward(map: &MirrorMap, primal: &SampleBatch) -> Result<SampleBatch> {
    if primal.dim() != map.dim() {
        return Err(Error::Dimension {
            expected: map.dim(),
            got: primal.dim(),
        });
    }
    let mut dual = Vec::with_capacity(primal.data().len());
    for (i, row) in primal.rows().enumerate() {
        dual.extend(map.gradient(row).map_err(|e| e.at_row(i))?);
    }
    SampleBatch::new(
        dual,
        map.dim(),
        Space::Dual,
        BatchMeta::new(primal.meta().seed, format!("grad_psi({})", primal.meta().generator)),
    )
}

/// Pulls dual points back with `∇Ψ*`; every output row is feasible.
pub fn pull_back(map: &MirrorMap, dual: &SampleBatch) -> Result<SampleBatch> {
    let mut primal = Vec::with_capacity(dual.data().len());
    for (i, row) in dual.rows().enumerate() {
        primal.extend(map.inverse_gradient(row).map_err(|e| e.at_row(i))?);
    }
    if dual.is_empty() {
        return Ok(SampleBatch::empty(map.dim(), Space::Primal, dual.meta().clone()));
    }
    SampleBatch::new(primal, map.dim(), Space::Primal, dual.meta().clone())
}

/// A dual velocity field trained by [`mirror_train`].
#[derive(Clone, Debug)]
pub struct TrainedMirrorFlow {
    pub model: MlpVelocity,
    pub report: TrainReport,
    pub dual_data: SampleBatch,
}

/// Maps the data into the dual space and fits the dual field on independent
/// `(prior, data)` couples.
pub fn mirror_train(
    map: &MirrorMap,
    primal_data: &SampleBatch,
    prior: &Prior,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<TrainedMirrorFlow> {
    if primal_data.is_empty() {
        return Err(Error::Precondition("training data is empty".into()));
    }
    let dual_data = push_forward(map, primal_data)?;
    let mut pairs = DataPairs::new(prior, &dual_data)?;
    let init = MlpVelocity::new(map.dim(), arch, cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let (model, report) = train(init, cfg, &mut pairs)?;
    Ok(TrainedMirrorFlow {
        model,
        report,
        dual_data,
    })
}

/// Euler sampling in the dual followed by `∇Ψ*` row by row.
pub fn mirror_sample<V: VelocityField + ?Sized>(
    map: &MirrorMap,
    v: &V,
    cfg: &SamplerConfig,
    prior: &Prior,
) -> Result<SampleBatch> {
    let dual = euler_sample(v, cfg, prior)?;
    pull_back(map, &dual)
}

/// Primal velocity `(∇²Ψ(x))⁻¹ v^D(∇Ψ(x), t)`.
pub fn primal_velocity<V: VelocityField + ?Sized>(map: &MirrorMap, v_dual: &V, x: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::Precondition(format!("time must lie in [0, 1), got {t}")));
    }
    let z = map.gradient(x)?;
    let vd = v_dual.velocity(&z, t)?;
    map.solve_hessian(x, &vd)
}
