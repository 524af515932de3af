//! Priors (Student-t, Gaussian) and synthetic targets.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batch::{BatchMeta, SampleBatch, Space};
use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;

/// Seeded generator used by every sampler in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard multivariate Student-t `t_{d,ν}` with identity scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentTPrior {
    pub dim: usize,
    pub nu: f64,
}

impl StudentTPrior {
    pub fn new(dim: usize, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(StudentTPrior { dim, nu })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PriorKind {
    Gaussian,
    StudentT { nu: f64 },
}

/// Source distribution of the flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prior {
    Gaussian { dim: usize },
    StudentT(StudentTPrior),
}

impl Prior {
    pub fn gaussian(dim: usize) -> Self {
        Prior::Gaussian { dim }
    }

    pub fn student_t(dim: usize, nu: f64) -> Result<Self> {
        StudentTPrior::new(dim, nu).map(Prior::StudentT)
    }

    pub fn from_kind(kind: PriorKind, dim: usize) -> Result<Self> {
        match kind {
            PriorKind::Gaussian => Ok(Prior::gaussian(dim)),
            PriorKind::StudentT { nu } => Prior::student_t(dim, nu),
        }
    }

    pub fn kind(&self) -> PriorKind {
        match self {
            Prior::Gaussian { .. } => PriorKind::Gaussian,
            Prior::StudentT(p) => PriorKind::StudentT { nu: p.nu },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::Gaussian { dim } => *dim,
            Prior::StudentT(p) => p.dim,
        }
    }

    /// Log density up to an additive constant.
    pub fn log_density_unnormalized(&self, u: &[f64]) -> f64 {
        let sq: f64 = u.iter().map(|v| v * v).sum();
        match self {
            Prior::Gaussian { .. } => -0.5 * sq,
            Prior::StudentT(p) => -0.5 * (p.nu + p.dim as f64) * (sq / p.nu).ln_1p(),
        }
    }

    /// `E‖Z₀‖²`; infinite for Student-t with `ν ≤ 2`.
    pub fn second_moment(&self) -> f64 {
        match self {
            Prior::Gaussian { dim } => *dim as f64,
            Prior::StudentT(p) if p.nu > 2.0 => p.dim as f64 * p.nu / (p.nu - 2.0),
            Prior::StudentT(_) => f64::INFINITY,
        }
    }

    /// One draw into `out`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = rng.sample(StandardNormal);
        }
        if let Prior::StudentT(p) = self {
            // ν > 0 is checked at construction
            let q: f64 = ChiSquared::new(p.nu).expect("valid nu").sample(rng);
            let scale = (q / p.nu).sqrt().recip();
            for o in out.iter_mut() {
                *o *= scale;
            }
        }
    }

    /// `n` i.i.d. draws; deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> SampleBatch {
        let d = self.dim();
        let mut rng = rng_from_seed(seed);
        let mut data = vec![0.0; n * d];
        for row in data.chunks_exact_mut(d) {
            self.draw(&mut rng, row);
        }
        let name = match self {
            Prior::Gaussian { .. } => "gaussian".to_string(),
            Prior::StudentT(p) => format!("student_t(nu={})", p.nu),
        };
        SampleBatch::new(data, d, Space::Dual, BatchMeta::new(Some(seed), name)).expect("finite draws")
    }
}

/// `n` draws from `t_{d,ν}` as `g / √(q/ν)`.
pub fn sample_student_t(prior: &StudentTPrior, n: usize, seed: u64) -> SampleBatch {
    Prior::StudentT(*prior).sample(n, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    pub diag_cov: Vec<f64>,
    pub weight: f64,
}

/// Gaussian mixture with diagonal covariances, truncated to a convex domain.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedMixtureTarget {
    components: Vec<MixtureComponent>,
    domain: ConvexDomain,
    acceptance: Vec<f64>,
}

const MIN_ACCEPTANCE: f64 = 1e-3;
const ACCEPTANCE_WINDOW: usize = 100_000;
const ACCEPTANCE_PROBE: usize = 20_000;
const ACCEPTANCE_PROBE_SEED: u64 = 0x5eed_acce;

impl TruncatedMixtureTarget {
    /// Validates weights and shapes, then estimates each component's acceptance rate
    /// from a fixed-seed probe. Components with positive weight and acceptance
    /// below 10⁻³ are rejected with a sampling error.
    pub fn new(components: Vec<MixtureComponent>, domain: ConvexDomain) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture has no components".into()));
        }
        let d = domain.dim();
        let mut total = 0.0;
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != d || c.diag_cov.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: if c.mean.len() != d { c.mean.len() } else { c.diag_cov.len() },
                });
            }
            if c.diag_cov.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(format!("component {k} has a non-positive variance")));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidParameter(format!("component {k} has an invalid weight")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
        }
        let mut target = TruncatedMixtureTarget {
            acceptance: vec![0.0; components.len()],
            components,
            domain,
        };
        let mut rng = rng_from_seed(ACCEPTANCE_PROBE_SEED);
        target.acceptance = target.estimate_acceptance(ACCEPTANCE_PROBE, &mut rng);
        for (k, (c, a)) in target.components.iter().zip(&target.acceptance).enumerate() {
            if c.weight > 0.0 && *a < MIN_ACCEPTANCE {
                return Err(Error::Sampling(format!(
                    "component {k} is accepted with rate {a:.2e} < {MIN_ACCEPTANCE:e}"
                )));
            }
        }
        Ok(target)
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Acceptance rates estimated at construction.
    pub fn acceptance_rates(&self) -> &[f64] {
        &self.acceptance
    }

    /// Fraction of untruncated draws from each component that land inside the domain.
    pub fn estimate_acceptance<R: Rng + ?Sized>(&self, proposals: usize, rng: &mut R) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.components
            .iter()
            .map(|c| {
                let hits = (0..proposals)
                    .filter(|_| {
                        draw_component(c, rng, &mut x);
                        self.domain.contains(&x)
                    })
                    .count();
                hits as f64 / proposals as f64
            })
            .collect()
    }

    /// Component weights after truncation: `w_k·a_k / Σ_j w_j·a_j`.
    pub fn truncated_weights(&self, acceptance: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = self.components.iter().zip(acceptance).map(|(c, a)| c.weight * a).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|r| r / total).collect()
    }

    /// Draws with their component labels.
    pub fn sample_labeled(&self, n: usize, seed: u64) -> Result<(SampleBatch, Vec<usize>)> {
        let d = self.dim();
        let mut rng = rng_from_seed(seed);
        let weights: Vec<f64> = self.components.iter().map(|c| c.weight).collect();
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut x = vec![0.0; d];
        let mut window_proposals = 0usize;
        let mut window_accepts = 0usize;
        while labels.len() < n {
            let k = pick.sample(&mut rng);
            draw_component(&self.components[k], &mut rng, &mut x);
            window_proposals += 1;
            if self.domain.contains(&x) {
                window_accepts += 1;
                data.extend_from_slice(&x);
                labels.push(k);
            }
            if window_proposals == ACCEPTANCE_WINDOW {
                let rate = window_accepts as f64 / window_proposals as f64;
                if rate < MIN_ACCEPTANCE {
                    return Err(Error::Sampling(format!(
                        "acceptance rate {rate:.2e} over {ACCEPTANCE_WINDOW} proposals"
                    )));
                }
                window_proposals = 0;
                window_accepts = 0;
            }
        }
        let batch = SampleBatch::new(data, d, Space::Primal, BatchMeta::new(Some(seed), "truncated_mixture"))?;
        Ok((batch, labels))
    }
}

fn draw_component<R: Rng + ?Sized>(c: &MixtureComponent, rng: &mut R, out: &mut [f64]) {
    for ((o, m), v) in out.iter_mut().zip(&c.mean).zip(&c.diag_cov) {
        let g: f64 = rng.sample(StandardNormal);
        *o = m + v.sqrt() * g;
    }
}

/// `n` i.i.d. draws from the truncated mixture by rejection; every row is feasible.
pub fn sample_truncated_mixture(target: &TruncatedMixtureTarget, n: usize, seed: u64) -> Result<SampleBatch> {
    target.sample_labeled(n, seed).map(|(b, _)| b)
}

/// Discrete distribution over a finite set of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteAtomTarget {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl FiniteAtomTarget {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} atoms with {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let d = atoms[0].len();
        if d == 0 || atoms.iter().any(|a| a.len() != d) {
            return Err(Error::InvalidParameter("atoms must share a positive dimension".into()));
        }
        if atoms.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("atoms must be finite".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("weights must be a probability vector".into()));
        }
        Ok(FiniteAtomTarget { atoms, weights })
    }

    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let n = atoms.len().max(1);
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn single(atom: Vec<f64>) -> Result<Self> {
        Self::new(vec![atom], vec![1.0])
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// `E‖Z₁‖²`.
    pub fn second_moment(&self) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * a.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// Categorical draws of atoms by weight.
pub fn sample_atoms(target: &FiniteAtomTarget, n: usize, seed: u64) -> SampleBatch {
    let d = target.dim();
    let mut rng = rng_from_seed(seed);
    let pick = WeightedIndex::new(&target.weights).expect("validated weights");
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        data.extend_from_slice(&target.atoms[pick.sample(&mut rng)]);
    }
    SampleBatch::new(data, d, Space::Dual, BatchMeta::new(Some(seed), "atoms")).expect("finite atoms")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn appendix_target() -> TruncatedMixtureTarget {
        let domain = ConvexDomain::polytope(
            vec![
                vec![1.0, 1.0],
                vec![-1.0, -1.0],
                vec![1.0, -1.0],
                vec![-5.0, 1.0],
                vec![-1.0 / 3.0, 1.0],
            ],
            vec![10.0, 30.0, 1.0, 90.0, 5.0],
        )
        .unwrap();
        TruncatedMixtureTarget::new(
            vec![
                MixtureComponent { mean: vec![-10.0, 0.0], diag_cov: vec![8.0, 2.0], weight: 0.6 },
                MixtureComponent { mean: vec![-15.0, -10.0], diag_cov: vec![1.0, 1.0], weight: 0.2 },
                MixtureComponent { mean: vec![3.0, 3.0], diag_cov: vec![0.5, 0.25], weight: 0.2 },
            ],
            domain,
        )
        .unwrap()
    }

    #[test]
    fn student_t_moments() {
        let prior = StudentTPrior::new(2, 10.0).unwrap();
        let b = sample_student_t(&prior, 1_000_000, 1);
        for j in 0..2 {
            let mean = b.rows().map(|r| r[j]).sum::<f64>() / b.len() as f64;
            assert!(mean.abs() < 0.01, "mean {mean}");
        }
        let m2 = b.mean_squared_norm();
        assert!((m2 / 2.5 - 1.0).abs() < 0.03, "second moment {m2}");
        assert_eq!(Prior::StudentT(prior).second_moment(), 2.5);
    }

    #[test]
    fn student_t_tail_index_matches_nu() {
        let prior = StudentTPrior::new(2, 3.0).unwrap();
        let b = sample_student_t(&prior, 1_000_000, 5);
        let mut norms: Vec<f64> = b.rows().map(|r| (r[0] * r[0] + r[1] * r[1]).sqrt()).collect();
        let fit = crate::geometry::ccdf_tail_fit(&mut norms).unwrap();
        assert!((fit.exponent / 3.0 - 1.0).abs() < 0.2, "{fit:?}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = Prior::student_t(3, 10.0).unwrap();
        assert_eq!(p.sample(100, 9), p.sample(100, 9));
        assert_ne!(p.sample(100, 9), p.sample(100, 10));
        let t = appendix_target();
        assert_eq!(sample_truncated_mixture(&t, 50, 2).unwrap(), sample_truncated_mixture(&t, 50, 2).unwrap());
    }

    #[test]
    fn truncated_mixture_is_feasible() {
        let t = appendix_target();
        let b = sample_truncated_mixture(&t, 1000, 3).unwrap();
        assert_eq!(b.len(), 1000);
        assert_eq!(b.first_infeasible(t.domain()), None);
    }

    #[test]
    fn truncated_mixture_occupancy() {
        let t = appendix_target();
        // Independent brute-force acceptance estimate.
        let mut rng = rng_from_seed(1234);
        let acc = t.estimate_acceptance(200_000, &mut rng);
        let expected = t.truncated_weights(&acc);
        let (_, labels) = t.sample_labeled(100_000, 4).unwrap();
        for (k, e) in expected.iter().enumerate() {
            let frac = labels.iter().filter(|&&l| l == k).count() as f64 / labels.len() as f64;
            assert!((frac - e).abs() < 0.02, "component {k}: {frac} vs {e}");
        }
    }

    #[test]
    fn component_outside_domain_is_rejected() {
        let domain = ConvexDomain::ball(1.0, 2).unwrap();
        let err = TruncatedMixtureTarget::new(
            vec![
                MixtureComponent { mean: vec![0.0, 0.0], diag_cov: vec![0.1, 0.1], weight: 0.5 },
                MixtureComponent { mean: vec![50.0, 0.0], diag_cov: vec![0.1, 0.1], weight: 0.5 },
            ],
            domain,
        );
        assert!(matches!(err, Err(Error::Sampling(_))));
    }

    #[test]
    fn atom_sampling() {
        let single = FiniteAtomTarget::single(vec![1.5, -2.0]).unwrap();
        let b = sample_atoms(&single, 5, 0);
        assert!(b.rows().all(|r| r == [1.5, -2.0]));

        let coin = FiniteAtomTarget::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
        let b = sample_atoms(&coin, 100_000, 1);
        let frac = b.data().iter().sum::<f64>() / 100_000.0;
        assert!((frac - 0.5).abs() < 0.01);

        let lopsided = FiniteAtomTarget::new(vec![vec![0.0], vec![1.0]], vec![1.0, 0.0]).unwrap();
        assert!(sample_atoms(&lopsided, 10_000, 2).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_targets() {
        assert!(FiniteAtomTarget::new(vec![vec![0.0]], vec![0.5]).is_err());
        assert!(FiniteAtomTarget::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]).is_err());
        assert!(StudentTPrior::new(2, 0.0).is_err());
    }
}
