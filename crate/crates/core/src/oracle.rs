//! Exact velocity fields for finite-atom targets, and numerical probes of their regularity.
//!
//! For straight-line couples `Z_t = (1−t)Z₀ + tZ₁` the velocity is
//! `v(z,t) = (E[Z₁ | Z_t = z] − z)/(1−t)`. With `Z₁` supported on atoms `a_i`, the
//! posterior over atoms has weights `w_i ∝ weight_i · p₀((z − t a_i)/(1−t))`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::VelocityField;
use crate::geometry::{norm, MirrorMap};
use crate::prior::{FiniteAtomTarget, Prior, PriorKind};

#[derive(Clone, Debug, PartialEq)]
pub struct OracleVelocity {
    prior: Prior,
    target: FiniteAtomTarget,
}

impl OracleVelocity {
    pub fn new(prior: PriorKind, target: FiniteAtomTarget) -> Result<Self> {
        let prior = Prior::from_kind(prior, target.dim())?;
        Ok(OracleVelocity { prior, target })
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn target(&self) -> &FiniteAtomTarget {
        &self.target
    }

    fn check(&self, z: &[f64], t: f64) -> Result<()> {
        if z.len() != self.target.dim() {
            return Err(Error::Dimension {
                expected: self.target.dim(),
                got: z.len(),
            });
        }
        if !(0.0..1.0).contains(&t) {
            return Err(Error::Precondition(format!("time must lie in [0, 1), got {t}")));
        }
        Ok(())
    }

    /// Posterior probabilities of each atom given `Z_t = z`.
    pub fn posterior_weights(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(z, t)?;
        let inv = 1.0 / (1.0 - t);
        let mut u = vec![0.0; z.len()];
        let logw: Vec<f64> = self
            .target
            .atoms()
            .iter()
            .zip(self.target.weights())
            .map(|(a, &w)| {
                if w == 0.0 {
                    return f64::NEG_INFINITY;
                }
                for ((uj, zj), aj) in u.iter_mut().zip(z).zip(a) {
                    *uj = (zj - t * aj) * inv;
                }
                w.ln() + self.prior.log_density_unnormalized(&u)
            })
            .collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numeric("all posterior log-weights are -inf".into()));
        }
        let mut w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= total;
        }
        Ok(w)
    }

    /// `E[Z₁ | Z_t = z]`.
    pub fn posterior_mean(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let w = self.posterior_weights(z, t)?;
        let mut mean = vec![0.0; z.len()];
        for (a, wi) in self.target.atoms().iter().zip(&w) {
            for (m, aj) in mean.iter_mut().zip(a) {
                *m += wi * aj;
            }
        }
        Ok(mean)
    }

    pub fn oracle_velocity(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let mean = self.posterior_mean(z, t)?;
        let inv = 1.0 / (1.0 - t);
        Ok(mean.iter().zip(z).map(|(m, zj)| (m - zj) * inv).collect())
    }
}

impl VelocityField for OracleVelocity {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn velocity(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        self.oracle_velocity(z, t)
    }
}

/// Probe points in space; times are `0, T/(n_times−1), …, T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub points: Vec<Vec<f64>>,
    pub n_times: usize,
    pub description: String,
}

impl ProbeGrid {
    /// Full lattice with `per_axis` points on every axis between `lo` and `hi`.
    pub fn lattice(lo: &[f64], hi: &[f64], per_axis: usize, n_times: usize) -> Self {
        let d = lo.len();
        let per_axis = per_axis.max(1);
        let total = per_axis.pow(d as u32);
        let mut points = Vec::with_capacity(total);
        for mut idx in 0..total {
            let p: Vec<f64> = (0..d)
                .map(|j| {
                    let k = idx % per_axis;
                    idx /= per_axis;
                    if per_axis == 1 {
                        0.5 * (lo[j] + hi[j])
                    } else {
                        lo[j] + (hi[j] - lo[j]) * k as f64 / (per_axis - 1) as f64
                    }
                })
                .collect();
            points.push(p);
        }
        ProbeGrid {
            points,
            n_times,
            description: format!("{per_axis}^{d} lattice over {lo:?}..{hi:?}, {n_times} times"),
        }
    }

    /// 11-point-per-axis lattice over the atoms' bounding box inflated by 50%, 11 times.
    pub fn around_atoms(target: &FiniteAtomTarget) -> Self {
        let d = target.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for a in target.atoms() {
            for j in 0..d {
                lo[j] = lo[j].min(a[j]);
                hi[j] = hi[j].max(a[j]);
            }
        }
        for j in 0..d {
            let pad = 0.25 * (hi[j] - lo[j]).max(1.0);
            lo[j] -= pad;
            hi[j] += pad;
        }
        Self::lattice(&lo, &hi, 11, 11)
    }

    pub fn times(&self, horizon: f64) -> Vec<f64> {
        if self.n_times <= 1 {
            return vec![0.0];
        }
        (0..self.n_times)
            .map(|i| horizon * i as f64 / (self.n_times - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    /// Largest finite-difference Jacobian spectral norm over the probe grid.
    pub spatial: f64,
    /// Largest finite-difference `‖∂v/∂t‖` over the probe grid.
    pub temporal: f64,
    pub horizon: f64,
    pub grid: String,
}

const FD_STEP: f64 = 1e-5;

/// Finite-difference Lipschitz probes of `v` over `grid × {0, …, T}`.
pub fn estimate_lipschitz<V: VelocityField + ?Sized>(v: &V, horizon: f64, grid: &ProbeGrid) -> Result<LipschitzEstimate> {
    if !(horizon > 0.0 && horizon < 1.0) {
        return Err(Error::Precondition(format!("horizon must lie in (0, 1), got {horizon}")));
    }
    if horizon + 2.0 * FD_STEP >= 1.0 {
        return Err(Error::Precondition("horizon too close to 1 for time differences".into()));
    }
    let d = v.dim();
    let mut spatial: f64 = 0.0;
    let mut temporal: f64 = 0.0;
    for t in grid.times(horizon) {
        for p in &grid.points {
            let mut jac = DMatrix::zeros(d, d);
            let mut probe = p.clone();
            for j in 0..d {
                probe[j] = p[j] + FD_STEP;
                let up = v.velocity(&probe, t)?;
                probe[j] = p[j] - FD_STEP;
                let down = v.velocity(&probe, t)?;
                probe[j] = p[j];
                for r in 0..d {
                    jac[(r, j)] = (up[r] - down[r]) / (2.0 * FD_STEP);
                }
            }
            let sn = jac.singular_values().iter().copied().fold(0.0, f64::max);
            spatial = spatial.max(sn);
            let dt: Vec<f64> = if t < FD_STEP {
                let v0 = v.velocity(p, t)?;
                let v1 = v.velocity(p, t + FD_STEP)?;
                let v2 = v.velocity(p, t + 2.0 * FD_STEP)?;
                (0..d)
                    .map(|r| (-3.0 * v0[r] + 4.0 * v1[r] - v2[r]) / (2.0 * FD_STEP))
                    .collect()
            } else {
                let up = v.velocity(p, t + FD_STEP)?;
                let down = v.velocity(p, t - FD_STEP)?;
                (0..d).map(|r| (up[r] - down[r]) / (2.0 * FD_STEP)).collect()
            };
            temporal = temporal.max(norm(&dt));
        }
    }
    if !(spatial.is_finite() && temporal.is_finite()) {
        return Err(Error::Numeric("Lipschitz estimate is not finite".into()));
    }
    Ok(LipschitzEstimate {
        spatial,
        temporal,
        horizon,
        grid: grid.description.clone(),
    })
}

const EQUIVALENCE_FD_STEP: f64 = 1e-6;

/// Follows the dual Euler trajectory from `z0` up to time `T` and, at every step, compares
/// the time derivative of `∇Ψ*(Z_t)` (central differences along the velocity) with
/// `(∇²Ψ(x))⁻¹ v(z,t)`. Returns the largest relative residual.
pub fn check_primal_dual_equivalence<V: VelocityField + ?Sized>(
    map: &MirrorMap,
    v: &V,
    z0: &[f64],
    horizon: f64,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0 && h <= 0.1) {
        return Err(Error::Precondition(format!("step size must lie in (0, 0.1], got {h}")));
    }
    if !(horizon > 0.0 && horizon < 1.0) {
        return Err(Error::Precondition(format!("horizon must lie in (0, 1), got {horizon}")));
    }
    let steps = (horizon / h).round() as usize;
    let mut z = z0.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..=steps {
        let t = (k as f64 * h).min(horizon);
        let x = map.inverse_gradient(&z)?;
        let vel = v.velocity(&z, t)?;
        let analytic = map.solve_hessian(&x, &vel)?;
        let shifted = |sign: f64| -> Vec<f64> {
            z.iter().zip(&vel).map(|(zj, vj)| zj + sign * EQUIVALENCE_FD_STEP * vj).collect()
        };
        let xp = map.inverse_gradient(&shifted(1.0))?;
        let xm = map.inverse_gradient(&shifted(-1.0))?;
        let diff: Vec<f64> = (0..z.len())
            .map(|j| (xp[j] - xm[j]) / (2.0 * EQUIVALENCE_FD_STEP) - analytic[j])
            .collect();
        let scale = norm(&analytic);
        let residual = if scale > 0.0 { norm(&diff) / scale } else { norm(&diff) };
        worst = worst.max(residual);
        if k < steps {
            for (zj, vj) in z.iter_mut().zip(&vel) {
                *zj += h * vj;
            }
        }
    }
    Ok(worst)
}
