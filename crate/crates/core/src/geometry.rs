//! Convex domains given by smooth barriers, and the mirror maps built on them.
//!
//! A domain is the open set `K = {x : φ_i(x) < 0 for all i}`. Polytopes use the
//! affine barriers `φ_i(x) = a_iᵀx − b_i`; balls use `φ(x) = ‖x‖² − R²`.
//!
//! Two potentials are supported:
//!
//! * the regularized barrier potential
//!   `Ψ(x) = −1/(1−κ) Σ (−φ_i(x))^{1−κ} + ½‖x‖²` with `0 < κ < 1`, whose Hessian
//!   dominates the identity and whose dual image has polynomial tails of order β/κ;
//! * the classical log-barrier `Ψ(x) = −Σ log(−φ_i(x))`.
//!
//! The inverse map `∇Ψ*` is evaluated with a damped Newton solve of
//! `min_x Ψ(x) − zᵀx`, keeping every iterate strictly inside the domain.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NEWTON_MAX_ITER: usize = 500;
const FRACTION_TO_BOUNDARY: f64 = 0.99;
const INTERIOR_SEARCH_MAX_ITER: usize = 10_000;
/// Residual tolerance guaranteed by [`MirrorMap::inverse_gradient`], relative to `1 + ‖z‖`.
pub const INVERSE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Polytope,
    Ball,
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    /// Rows `a_i` stored row-major, `m × d`.
    Polytope { rows: Vec<f64>, offsets: Vec<f64> },
    Ball { radius: f64 },
}

/// An open convex set with nonempty interior.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexDomain {
    shape: Shape,
    dim: usize,
}

impl ConvexDomain {
    /// Polytope `{x : a_iᵀx < b_i}` from its rows and offsets.
    pub fn polytope(rows: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter(
                "polytope needs at least one row".into(),
            ));
        }
        if rows.len() != offsets.len() {
            return Err(Error::InvalidParameter(format!(
                "polytope has {} rows but {} offsets",
                rows.len(),
                offsets.len()
            )));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::InvalidParameter("polytope rows are empty".into()));
        }
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) || !offsets[i].is_finite() {
                return Err(Error::InvalidParameter(format!("row {i} is not finite")));
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidParameter(format!("row {i} is zero")));
            }
            flat.extend_from_slice(row);
        }
        let domain = ConvexDomain {
            shape: Shape::Polytope {
                rows: flat,
                offsets,
            },
            dim,
        };
        domain.find_interior_point()?;
        Ok(domain)
    }

    /// Open Euclidean ball of the given radius centred at the origin.
    pub fn ball(radius: f64, dim: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("ball dimension must be positive".into()));
        }
        Ok(ConvexDomain {
            shape: Shape::Ball { radius },
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> DomainKind {
        match self.shape {
            Shape::Polytope { .. } => DomainKind::Polytope,
            Shape::Ball { .. } => DomainKind::Ball,
        }
    }

    /// Number of barrier functions `m` (1 for a ball).
    pub fn n_constraints(&self) -> usize {
        match &self.shape {
            Shape::Polytope { offsets, .. } => offsets.len(),
            Shape::Ball { .. } => 1,
        }
    }

    pub fn radius(&self) -> Option<f64> {
        match self.shape {
            Shape::Ball { radius } => Some(radius),
            Shape::Polytope { .. } => None,
        }
    }

    /// Polytope rows as owned vectors; `None` for a ball.
    pub fn rows(&self) -> Option<Vec<Vec<f64>>> {
        match &self.shape {
            Shape::Polytope { rows, .. } => Some(rows.chunks(self.dim).map(<[f64]>::to_vec).collect()),
            Shape::Ball { .. } => None,
        }
    }

    pub fn offsets(&self) -> Option<&[f64]> {
        match &self.shape {
            Shape::Polytope { offsets, .. } => Some(offsets),
            Shape::Ball { .. } => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `(φ_1(x), …, φ_m(x))`.
    pub fn barrier_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.n_constraints()];
        self.fill_barrier_values(x, &mut out);
        Ok(out)
    }

    fn fill_barrier_values(&self, x: &[f64], out: &mut [f64]) {
        match &self.shape {
            Shape::Polytope { rows, offsets } => {
                for ((row, b), o) in rows.chunks(self.dim).zip(offsets).zip(out.iter_mut()) {
                    *o = dot(row, x) - b;
                }
            }
            Shape::Ball { radius } => out[0] = dot(x, x) - radius * radius,
        }
    }

    /// Strict membership: every barrier value is negative. Boundary points are excluded.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.first_violation(x).is_none()
    }

    /// Index and value of the first barrier with `φ_i(x) ≥ 0` (or NaN).
    pub fn first_violation(&self, x: &[f64]) -> Option<(usize, f64)> {
        match &self.shape {
            Shape::Polytope { rows, offsets } => rows
                .chunks(self.dim)
                .zip(offsets)
                .map(|(row, b)| dot(row, x) - b)
                .enumerate()
                .find(|(_, v)| !(*v < 0.0)),
            Shape::Ball { radius } => {
                let v = dot(x, x) - radius * radius;
                (!(v < 0.0)).then_some((0, v))
            }
        }
    }

    fn ensure_feasible(&self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        match self.first_violation(x) {
            None => Ok(()),
            Some((constraint, value)) => Err(Error::Infeasible { constraint, value }),
        }
    }

    /// Largest `α` such that `x + α p` stays in the closure of the domain, for feasible `x`.
    /// Returns `f64::INFINITY` when the ray never leaves.
    pub fn max_step(&self, x: &[f64], p: &[f64]) -> f64 {
        match &self.shape {
            Shape::Polytope { rows, offsets } => {
                let mut best = f64::INFINITY;
                for (row, b) in rows.chunks(self.dim).zip(offsets) {
                    let ap = dot(row, p);
                    if ap > 0.0 {
                        let slack = b - dot(row, x);
                        best = best.min(slack / ap);
                    }
                }
                best
            }
            Shape::Ball { radius } => {
                let pp = dot(p, p);
                if pp == 0.0 {
                    return f64::INFINITY;
                }
                let xp = dot(x, p);
                let slack = radius * radius - dot(x, x);
                (-xp + (xp * xp + pp * slack).max(0.0).sqrt()) / pp
            }
        }
    }

    /// Euclidean distance from a feasible `x` to the boundary (0 if infeasible).
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        match &self.shape {
            Shape::Polytope { rows, offsets } => rows
                .chunks(self.dim)
                .zip(offsets)
                .map(|(row, b)| (b - dot(row, x)) / norm(row))
                .fold(f64::INFINITY, f64::min),
            Shape::Ball { radius } => radius - norm(x),
        }
    }

    /// Finds a strictly feasible point by subgradient steps on `x ↦ max_i φ_i(x)`
    /// starting from the origin.
    ///
    /// Each step is a Polyak step towards the level `−τ`; `τ` starts at a fraction of the
    /// initial violation and is halved whenever a hundred steps pass without success.
    pub fn find_interior_point(&self) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.dim];
        let mut phi = vec![0.0; self.n_constraints()];
        let mut grad = vec![0.0; self.dim];
        self.fill_barrier_values(&x, &mut phi);
        let (_, f0) = argmax(&phi);
        if f0 < 0.0 {
            return Ok(x);
        }
        let mut level = 1e-3 * (1.0 + f0.abs());
        let mut since_progress = 0usize;
        let mut best = f0;
        for _ in 0..INTERIOR_SEARCH_MAX_ITER {
            self.fill_barrier_values(&x, &mut phi);
            let (i, f) = argmax(&phi);
            if f < 0.0 {
                return Ok(x);
            }
            if f < best {
                best = f;
                since_progress = 0;
            } else {
                since_progress += 1;
                if since_progress >= 100 {
                    level *= 0.5;
                    since_progress = 0;
                }
            }
            self.barrier_gradient(i, &x, &mut grad);
            let gg = dot(&grad, &grad);
            if gg == 0.0 {
                break;
            }
            let step = (f + level) / gg;
            for (xj, gj) in x.iter_mut().zip(&grad) {
                *xj -= step * gj;
            }
        }
        Err(Error::EmptyInterior(format!(
            "no strictly feasible point found after {INTERIOR_SEARCH_MAX_ITER} subgradient steps"
        )))
    }

    fn barrier_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        match &self.shape {
            Shape::Polytope { rows, .. } => {
                out.copy_from_slice(&rows[i * self.dim..(i + 1) * self.dim]);
            }
            Shape::Ball { .. } => {
                for (o, xj) in out.iter_mut().zip(x) {
                    *o = 2.0 * xj;
                }
            }
        }
    }

    /// Curvature of the barriers: `∇²φ_i` is `0` for affine rows and `2I` for the ball.
    fn barrier_curvature(&self) -> f64 {
        match self.shape {
            Shape::Polytope { .. } => 0.0,
            Shape::Ball { .. } => 2.0,
        }
    }

    /// A random strictly interior point on a ray from `origin`, at a uniform fraction of
    /// the distance to the boundary (capped at `cap` for unbounded rays).
    pub fn random_point_on_ray<R: Rng + ?Sized>(&self, origin: &[f64], cap: f64, rng: &mut R) -> Vec<f64> {
        loop {
            let dir: Vec<f64> = (0..self.dim)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let reach = self.max_step(origin, &dir).min(cap / norm(&dir).max(f64::MIN_POSITIVE));
            let frac: f64 = rng.random::<f64>();
            let x: Vec<f64> = origin
                .iter()
                .zip(&dir)
                .map(|(o, d)| o + frac * reach * d)
                .collect();
            if self.contains(&x) {
                return x;
            }
        }
    }
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum MapVariant {
    Regularized { kappa: f64 },
    LogBarrier,
}

/// Mirror map `∇Ψ : K → ℝ^d` with its Hessian and inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct MirrorMap {
    domain: ConvexDomain,
    variant: MapVariant,
    interior_point: Vec<f64>,
}

/// Diagnostics returned alongside an inverse-map solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverseStats {
    pub iterations: usize,
    pub residual: f64,
}

impl MirrorMap {
    pub fn new(domain: ConvexDomain, variant: MapVariant) -> Result<Self> {
        if let MapVariant::Regularized { kappa } = variant {
            if !(kappa > 0.0 && kappa < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "kappa must lie in (0, 1), got {kappa}"
                )));
            }
        }
        let interior_point = domain.find_interior_point()?;
        Ok(MirrorMap {
            domain,
            variant,
            interior_point,
        })
    }

    pub fn regularized(domain: ConvexDomain, kappa: f64) -> Result<Self> {
        Self::new(domain, MapVariant::Regularized { kappa })
    }

    pub fn log_barrier(domain: ConvexDomain) -> Result<Self> {
        Self::new(domain, MapVariant::LogBarrier)
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.domain
    }

    pub fn variant(&self) -> MapVariant {
        self.variant
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn interior_point(&self) -> &[f64] {
        &self.interior_point
    }

    /// Slacks `s_i = −φ_i(x) > 0`, or an infeasibility error naming the violated row.
    fn slacks(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.domain.ensure_feasible(x)?;
        let mut s = vec![0.0; self.domain.n_constraints()];
        self.domain.fill_barrier_values(x, &mut s);
        for v in &mut s {
            *v = -*v;
        }
        Ok(s)
    }

    /// `Ψ(x)`.
    pub fn potential(&self, x: &[f64]) -> Result<f64> {
        let s = self.slacks(x)?;
        Ok(match self.variant {
            MapVariant::Regularized { kappa } => {
                let barrier: f64 = s.iter().map(|si| si.powf(1.0 - kappa)).sum();
                -barrier / (1.0 - kappa) + 0.5 * dot(x, x)
            }
            MapVariant::LogBarrier => -s.iter().map(|si| si.ln()).sum::<f64>(),
        })
    }

    /// Dual point `z = ∇Ψ(x)`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.slacks(x)?;
        Ok(self.gradient_from_slacks(x, &s))
    }

    fn gradient_from_slacks(&self, x: &[f64], s: &[f64]) -> Vec<f64> {
        let d = self.domain.dim;
        let mut out = match self.variant {
            MapVariant::Regularized { .. } => x.to_vec(),
            MapVariant::LogBarrier => vec![0.0; d],
        };
        let mut g = vec![0.0; d];
        for (i, &si) in s.iter().enumerate() {
            let w = match self.variant {
                MapVariant::Regularized { kappa } => si.powf(-kappa),
                MapVariant::LogBarrier => 1.0 / si,
            };
            self.domain.barrier_gradient(i, x, &mut g);
            for (o, gj) in out.iter_mut().zip(&g) {
                *o += w * gj;
            }
        }
        out
    }

    /// `∇²Ψ(x)`, symmetric; `⪰ I` for the regularized potential.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.slacks(x)?;
        Ok(self.hessian_from_slacks(x, &s))
    }

    fn hessian_from_slacks(&self, x: &[f64], s: &[f64]) -> DMatrix<f64> {
        let d = self.domain.dim;
        let mut h = match self.variant {
            MapVariant::Regularized { .. } => DMatrix::identity(d, d),
            MapVariant::LogBarrier => DMatrix::zeros(d, d),
        };
        let curvature = self.domain.barrier_curvature();
        let mut g = vec![0.0; d];
        let mut diag = 0.0;
        for (i, &si) in s.iter().enumerate() {
            let (rank_one, second) = match self.variant {
                MapVariant::Regularized { kappa } => {
                    let p = si.powf(-kappa);
                    (kappa * p / si, p)
                }
                MapVariant::LogBarrier => (1.0 / (si * si), 1.0 / si),
            };
            self.domain.barrier_gradient(i, x, &mut g);
            for r in 0..d {
                let gr = rank_one * g[r];
                for c in 0..d {
                    h[(r, c)] += gr * g[c];
                }
            }
            diag += second * curvature;
        }
        for r in 0..d {
            h[(r, r)] += diag;
        }
        h
    }

    fn objective(&self, x: &[f64], z: &[f64]) -> Option<f64> {
        self.potential(x).ok().map(|p| p - dot(z, x))
    }

    /// `∇Ψ*(z)`: the unique feasible `x` with `∇Ψ(x) = z`.
    pub fn inverse_gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.inverse_gradient_with_stats(z).map(|(x, _)| x)
    }

    /// Damped Newton on `Ψ(x) − zᵀx` from the stored interior point.
    ///
    /// Steps are cut to 99% of the distance to the boundary and halved until either the
    /// objective or the gradient residual decreases. Iteration stops a couple of steps
    /// after the residual falls below `1e-10·(1+‖z‖)`, or when no step makes progress.
    pub fn inverse_gradient_with_stats(&self, z: &[f64]) -> Result<(Vec<f64>, InverseStats)> {
        self.domain.check_dim(z)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dual point is not finite".into()));
        }
        let scale = 1.0 + norm(z);
        let mut x = self.interior_point.clone();
        let mut s = self.slacks(&x)?;
        let mut residual_vec = sub(&self.gradient_from_slacks(&x, &s), z);
        let mut residual = norm(&residual_vec);
        let mut polish = 0;
        let mut iterations = 0;
        while iterations < NEWTON_MAX_ITER {
            if residual <= 1e-10 * scale {
                polish += 1;
                if polish > 2 || residual == 0.0 {
                    break;
                }
            }
            iterations += 1;
            let h = self.hessian_from_slacks(&x, &s);
            let Some(chol) = h.cholesky() else {
                return Err(Error::Numeric("hessian is not positive definite".into()));
            };
            let step = -chol.solve(&DVector::from_column_slice(&residual_vec));
            let step = step.as_slice();
            let mut alpha = (FRACTION_TO_BOUNDARY * self.domain.max_step(&x, step)).min(1.0);
            let f0 = self.objective(&x, z).unwrap_or(f64::INFINITY);
            let mut accepted = None;
            for _ in 0..60 {
                let cand: Vec<f64> = x.iter().zip(step).map(|(xi, pi)| xi + alpha * pi).collect();
                if let Ok(sc) = self.slacks(&cand) {
                    let rv = sub(&self.gradient_from_slacks(&cand, &sc), z);
                    let r = norm(&rv);
                    let f = self.objective(&cand, z).unwrap_or(f64::INFINITY);
                    if f <= f0 || r < residual {
                        accepted = Some((cand, sc, rv, r));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((cand, sc, rv, r)) => {
                    if r >= residual && residual <= 1e-10 * scale {
                        break;
                    }
                    x = cand;
                    s = sc;
                    residual_vec = rv;
                    residual = r;
                }
                None => break,
            }
        }
        let stats = InverseStats {
            iterations,
            residual,
        };
        if residual <= INVERSE_TOLERANCE * scale {
            Ok((x, stats))
        } else {
            Err(Error::NoConvergence {
                iterations,
                residual,
            })
        }
    }

    /// Primal velocity `(∇²Ψ(x))⁻¹ v` for a dual velocity `v` at `x`.
    pub fn solve_hessian(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.domain.check_dim(v)?;
        let h = self.hessian(x)?;
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::Numeric("hessian is not positive definite".into()))?;
        Ok(chol.solve(&DVector::from_column_slice(v)).as_slice().to_vec())
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Fitted dual tail of `‖∇Ψ(X)‖` for primal samples `X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub exponent_estimate: f64,
    /// Primal boundary-mass exponent, when known analytically.
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub r_squared: f64,
    pub n_samples: usize,
    pub n_tail: usize,
}

impl TailReport {
    /// Exponent predicted from the boundary-mass exponent, `β/κ`, when both are known.
    pub fn predicted_exponent(&self) -> Option<f64> {
        Some(self.beta? / self.kappa?)
    }
}

pub const TAIL_MIN_SAMPLES: usize = 10_000;
const TAIL_MIN_POINTS: usize = 100;

/// Maps `n` primal draws through `∇Ψ` and fits a line to the log CCDF of `‖z‖`
/// against `log ‖z‖` over the top decile. The exponent is minus the slope.
///
/// `sampler` fills its argument with one primal draw per call.
pub fn dual_tail_exponent<F>(map: &MirrorMap, mut sampler: F, n: usize, beta: Option<f64>) -> Result<TailReport>
where
    F: FnMut(&mut [f64]),
{
    if n < TAIL_MIN_SAMPLES {
        return Err(Error::Precondition(format!(
            "tail fit needs at least {TAIL_MIN_SAMPLES} samples, got {n}"
        )));
    }
    let mut x = vec![0.0; map.dim()];
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        sampler(&mut x);
        let z = map.gradient(&x).map_err(|e| e.at_row(i))?;
        norms.push(norm(&z));
    }
    let fit = ccdf_tail_fit(&mut norms)?;
    Ok(TailReport {
        exponent_estimate: fit.exponent,
        beta,
        kappa: match map.variant {
            MapVariant::Regularized { kappa } => Some(kappa),
            MapVariant::LogBarrier => None,
        },
        r_squared: fit.r_squared,
        n_samples: n,
        n_tail: fit.n_tail,
    })
}

/// Result of a log-log CCDF tail fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailFit {
    pub exponent: f64,
    pub r_squared: f64,
    pub n_tail: usize,
}

/// Least-squares fit of `log P(R ≥ r)` against `log r` over the values strictly above the
/// 90% empirical quantile. Sorts `values` in place.
pub fn ccdf_tail_fit(values: &mut [f64]) -> Result<TailFit> {
    let n = values.len();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Statistics("non-finite value in tail sample".into()));
    }
    values.sort_by(|a, b| b.total_cmp(a));
    let decile = n / 10;
    if decile == 0 {
        return Err(Error::Statistics("sample too small for a decile fit".into()));
    }
    let threshold = values[decile];
    let tail: Vec<(f64, f64)> = values[..decile]
        .iter()
        .enumerate()
        .take_while(|(_, &r)| r > threshold && r > 0.0)
        .map(|(j, &r)| (r.ln(), ((j + 1) as f64 / n as f64).ln()))
        .collect();
    if tail.len() < TAIL_MIN_POINTS {
        return Err(Error::Statistics(format!(
            "degenerate tail: only {} points above the 90% quantile",
            tail.len()
        )));
    }
    let m = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / m;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = tail.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 1e-12 * m {
        return Err(Error::Statistics("degenerate tail: no spread in log radius".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    Ok(TailFit {
        exponent: -slope,
        r_squared,
        n_tail: tail.len(),
    })
}
