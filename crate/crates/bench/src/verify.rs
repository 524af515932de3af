//! Numerical property checks shared by `mirrorflow verify` and the acceptance suite.

use mirrorflow::flow::euler_integrate;
use mirrorflow::geometry::{dual_tail_exponent, min_eigenvalue};
use mirrorflow::metrics::{feasibility_rate, kl_knn, mmd_squared, w2_exact};
use mirrorflow::model::{train, velocity_mse_on_grid, PairProvider, TrainingBatch};
use mirrorflow::oracle::{check_primal_dual_equivalence, estimate_lipschitz};
use mirrorflow::prior::rng_from_seed;
use mirrorflow::{
    Architecture, BatchMeta, ConvexDomain, FiniteAtomTarget, MapVariant, MirrorMap, MlpVelocity, OracleVelocity,
    Prior, PriorKind, ProbeGrid, SampleBatch, Space, TailReport, TrainConfig,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{ExperimentConfig, Preset};

/// One line of the verification table.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured quantity and the bound it was compared with.
    pub value: f64,
    pub bound: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        CheckResult {
            name: name.into(),
            passed: value <= bound,
            value,
            bound,
            detail: String::new(),
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        CheckResult {
            name: name.into(),
            passed: value >= bound,
            value,
            bound,
            detail: String::new(),
        }
    }

    pub fn failed(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        CheckResult {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            bound: f64::NAN,
            detail: err.to_string(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

fn or_failed(name: &str, r: mirrorflow::Result<CheckResult>) -> CheckResult {
    r.unwrap_or_else(|e| CheckResult::failed(name, e))
}

pub type GradientFn = dyn Fn(&MirrorMap, &[f64]) -> mirrorflow::Result<Vec<f64>>;

fn exact_gradient(map: &MirrorMap, x: &[f64]) -> mirrorflow::Result<Vec<f64>> {
    map.gradient(x)
}

/// Regularized maps on the preset domains, with the preset `κ`.
pub fn preset_maps() -> mirrorflow::Result<Vec<(String, MirrorMap)>> {
    let mut out = Vec::new();
    for preset in [Preset::Polytope2d, Preset::Polytope10d, Preset::Ball6d] {
        let cfg = ExperimentConfig::preset(preset);
        let domain = cfg
            .build_domain()
            .map_err(|e| mirrorflow::Error::InvalidParameter(e.to_string()))?;
        out.push((format!("{preset:?}").to_lowercase(), MirrorMap::new(domain, cfg.map)?));
    }
    Ok(out)
}

/// Interior points at uniform fractions of random rays from the map's interior point.
pub fn interior_points(map: &MirrorMap, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| map.domain().random_point_on_ray(map.interior_point(), 100.0, &mut rng))
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Worst `‖∇Ψ*(g(x)) − x‖ / (1 + ‖g(x)‖)` with `g` the supplied gradient.
pub fn round_trip_error(map: &MirrorMap, points: &[Vec<f64>], gradient: &GradientFn) -> mirrorflow::Result<f64> {
    let mut worst: f64 = 0.0;
    for x in points {
        let z = gradient(map, x)?;
        let back = map.inverse_gradient(&z)?;
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(err / (1.0 + norm(&z)));
    }
    Ok(worst)
}

pub fn check_round_trip(label: &str, map: &MirrorMap, points: &[Vec<f64>], gradient: &GradientFn) -> CheckResult {
    let name = format!("geometry/{label}: conjugate round trip");
    or_failed(
        &name,
        round_trip_error(map, points, gradient).map(|e| CheckResult::at_most(&name, e, 1e-8)),
    )
}

pub fn min_hessian_eigenvalue(map: &MirrorMap, points: &[Vec<f64>]) -> mirrorflow::Result<f64> {
    let mut worst = f64::INFINITY;
    for x in points {
        worst = worst.min(min_eigenvalue(&map.hessian(x)?));
    }
    Ok(worst)
}

/// Difference step along coordinate `j`: `base`, shrunk near the boundary.
fn fd_step(domain: &ConvexDomain, x: &[f64], j: usize, base: f64) -> f64 {
    let mut e = vec![0.0; x.len()];
    e[j] = 1.0;
    let up = domain.max_step(x, &e);
    e[j] = -1.0;
    let down = domain.max_step(x, &e);
    base * up.min(down).min(1.0)
}

/// Worst `‖∇Ψ − differences of Ψ‖ / ‖∇Ψ‖`, using the five-point stencil.
pub fn gradient_fd_error(map: &MirrorMap, points: &[Vec<f64>]) -> mirrorflow::Result<f64> {
    let mut worst: f64 = 0.0;
    for x in points {
        let g = map.gradient(x)?;
        let mut diff = 0.0;
        let mut probe = x.clone();
        for j in 0..x.len() {
            let eps = fd_step(map.domain(), x, j, 2.5e-4);
            let mut at = |k: f64| {
                probe[j] = x[j] + k * eps;
                map.potential(&probe)
            };
            let fd = (-at(2.0)? + 8.0 * at(1.0)? - 8.0 * at(-1.0)? + at(-2.0)?) / (12.0 * eps);
            probe[j] = x[j];
            diff += (fd - g[j]).powi(2);
        }
        worst = worst.max(diff.sqrt() / norm(&g).max(1e-300));
    }
    Ok(worst)
}

/// Worst Frobenius `‖∇²Ψ − differences of ∇Ψ‖ / ‖∇²Ψ‖`.
pub fn hessian_fd_error(map: &MirrorMap, points: &[Vec<f64>]) -> mirrorflow::Result<f64> {
    let mut worst: f64 = 0.0;
    for x in points {
        let h = map.hessian(x)?;
        let mut diff = 0.0;
        let mut probe = x.clone();
        for j in 0..x.len() {
            let eps = fd_step(map.domain(), x, j, 1e-6);
            probe[j] = x[j] + eps;
            let up = map.gradient(&probe)?;
            probe[j] = x[j] - eps;
            let down = map.gradient(&probe)?;
            probe[j] = x[j];
            for i in 0..x.len() {
                diff += ((up[i] - down[i]) / (2.0 * eps) - h[(i, j)]).powi(2);
            }
        }
        worst = worst.max(diff.sqrt() / h.norm());
    }
    Ok(worst)
}

/// Round trip, strong convexity and derivative checks on `n` points per preset domain.
pub fn geometry_checks(n: usize, seed: u64) -> Vec<CheckResult> {
    let maps = match preset_maps() {
        Ok(m) => m,
        Err(e) => return vec![CheckResult::failed("geometry: preset domains", e)],
    };
    let mut out = Vec::new();
    for (label, map) in &maps {
        let points = interior_points(map, n, seed);
        out.push(check_round_trip(label, map, &points, &exact_gradient));
        let name = format!("geometry/{label}: min Hessian eigenvalue");
        out.push(or_failed(
            &name,
            min_hessian_eigenvalue(map, &points).map(|v| CheckResult::at_least(&name, v, 1.0 - 1e-8)),
        ));
        let name = format!("geometry/{label}: gradient vs differences");
        out.push(or_failed(
            &name,
            gradient_fd_error(map, &points).map(|v| CheckResult::at_most(&name, v, 1e-6)),
        ));
        let name = format!("geometry/{label}: Hessian vs differences");
        out.push(or_failed(
            &name,
            hessian_fd_error(map, &points).map(|v| CheckResult::at_most(&name, v, 1e-5)),
        ));
    }
    out
}

pub fn unit_square() -> ConvexDomain {
    ConvexDomain::polytope(
        vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
        vec![1.0; 4],
    )
    .expect("unit square is a valid polytope")
}

/// Dual tail fit of uniform samples on `[−1, 1]²`.
pub fn square_tail(variant: MapVariant, n: usize, seed: u64) -> mirrorflow::Result<TailReport> {
    let map = MirrorMap::new(unit_square(), variant)?;
    let mut rng = rng_from_seed(seed);
    dual_tail_exponent(
        &map,
        |x| {
            for v in x.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        },
        n,
        Some(1.0),
    )
}

pub fn tail_checks(n: usize, seed: u64) -> Vec<CheckResult> {
    [
        ("tail: regularized κ=0.5 exponent", MapVariant::Regularized { kappa: 0.5 }, 2.0, 0.5),
        ("tail: log-barrier exponent", MapVariant::LogBarrier, 1.0, 0.4),
    ]
    .into_iter()
    .map(|(name, variant, centre, tol)| {
        or_failed(
            name,
            square_tail(variant, n, seed).map(|r| {
                CheckResult::at_most(name, (r.exponent_estimate - centre).abs(), tol).with_detail(format!(
                    "exponent {:.4} (target {centre} ± {tol}), R² {:.4}, tail points {}",
                    r.exponent_estimate, r.r_squared, r.n_tail
                ))
            }),
        )
    })
    .collect()
}

/// Worst `|Euler(z₀) − (z* + (1−T)(z₀ − z*))|` over step sizes, horizons and random starts.
pub fn single_atom_euler_error(seed: u64) -> mirrorflow::Result<f64> {
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for &(h, horizon) in &[(0.2, 0.8), (0.1, 0.9), (0.1, 0.5), (0.05, 0.95), (0.01, 0.99), (0.25, 0.75), (0.5, 0.5)] {
        for d in [1usize, 3] {
            let star: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            for kind in [PriorKind::Gaussian, PriorKind::StudentT { nu: 3.0 }] {
                let v = OracleVelocity::new(kind, FiniteAtomTarget::single(star.clone())?)?;
                for _ in 0..5 {
                    let z0: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let steps = (horizon / h as f64).round() as usize;
                    let out = euler_integrate(&v, z0.clone(), h, steps)?;
                    for j in 0..d {
                        let exact = star[j] + (1.0 - horizon) * (z0[j] - star[j]);
                        worst = worst.max((out[j] - exact).abs());
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// `v(0.5, 0.5)` for atoms `{0, 1}` under a Cauchy prior, against direct density evaluation.
pub fn two_atom_oracle_error() -> mirrorflow::Result<(f64, f64)> {
    let target = FiniteAtomTarget::uniform(vec![vec![0.0], vec![1.0]])?;
    let o = OracleVelocity::new(PriorKind::StudentT { nu: 1.0 }, target)?;
    let v = o.oracle_velocity(&[0.5], 0.5)?[0];
    let (z, t) = (0.5, 0.5);
    let density = |u: f64| 1.0 / (std::f64::consts::PI * (1.0 + u * u));
    let w: Vec<f64> = [0.0, 1.0].iter().map(|a: &f64| density((z - t * a) / (1.0 - t))).collect();
    let mean = w[1] / (w[0] + w[1]);
    let brute = (mean - z) / (1.0 - t);
    Ok(((v - 1.0 / 3.0).abs(), (v - brute).abs()))
}

/// Worst primal–dual equivalence residual over maps, atom targets and random starts.
pub fn equivalence_residual(seed: u64) -> mirrorflow::Result<f64> {
    let mut rng = rng_from_seed(seed);
    let maps = [
        MirrorMap::regularized(unit_square(), 0.5)?,
        MirrorMap::log_barrier(unit_square())?,
        MirrorMap::regularized(ConvexDomain::ball(2.0, 2)?, 0.3)?,
    ];
    let target = FiniteAtomTarget::new(vec![vec![-1.0, 0.5], vec![2.0, -1.5], vec![0.0, 3.0]], vec![0.5, 0.3, 0.2])?;
    let mut worst: f64 = 0.0;
    for map in &maps {
        for kind in [PriorKind::StudentT { nu: 10.0 }, PriorKind::Gaussian] {
            let v = OracleVelocity::new(kind, target.clone())?;
            for _ in 0..3 {
                let z0: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                worst = worst.max(check_primal_dual_equivalence(map, &v, &z0, 0.9, 0.05)?);
            }
        }
    }
    Ok(worst)
}

pub fn oracle_checks(seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let name = "oracle: single-atom Euler exactness";
    out.push(or_failed(
        name,
        single_atom_euler_error(seed).map(|e| CheckResult::at_most(name, e, 1e-12)),
    ));
    let name = "oracle: two-atom v(0.5, 0.5) = 1/3";
    out.push(or_failed(
        name,
        two_atom_oracle_error().map(|(exact, brute)| {
            CheckResult::at_most(name, exact.max(brute), 1e-9)
                .with_detail(format!("|v − 1/3| = {exact:.2e}, |v − brute force| = {brute:.2e}"))
        }),
    ));
    let name = "oracle: primal–dual equivalence";
    out.push(or_failed(
        name,
        equivalence_residual(seed).map(|e| CheckResult::at_most(name, e, 1e-4)),
    ));
    out
}

/// Far-atom configuration where a Gaussian prior's velocity is much steeper than a Cauchy prior's.
pub fn far_atom_probe() -> mirrorflow::Result<(FiniteAtomTarget, ProbeGrid, f64)> {
    let target = FiniteAtomTarget::new(vec![vec![0.0], vec![10.0]], vec![0.9, 0.1])?;
    let grid = ProbeGrid::lattice(&[-10.0], &[20.0], 301, 11);
    Ok((target, grid, 0.5))
}

pub fn lipschitz_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();
    for horizon in [0.5, 0.9] {
        let name = format!("lipschitz: single atom at T={horizon} vs 1/(1−T)");
        let r = (|| {
            let target = FiniteAtomTarget::single(vec![1.0, -2.0])?;
            let o = OracleVelocity::new(PriorKind::StudentT { nu: 5.0 }, target.clone())?;
            let est = estimate_lipschitz(&o, horizon, &ProbeGrid::around_atoms(&target))?;
            let expected = 1.0 / (1.0 - horizon);
            Ok(CheckResult::at_most(&name, (est.spatial - expected).abs() / expected, 1e-3)
                .with_detail(format!("estimate {:.6}, expected {expected:.6}", est.spatial)))
        })();
        out.push(or_failed(&name, r));
    }
    let name = "lipschitz: Student-t oracle finite on probe grids";
    let r = (|| {
        let targets = [
            FiniteAtomTarget::uniform(vec![vec![-2.0, 0.0], vec![1.0, 3.0], vec![3.0, -1.0]])?,
            FiniteAtomTarget::new(vec![vec![0.0], vec![10.0]], vec![0.9, 0.1])?,
        ];
        let mut estimates = Vec::new();
        for target in &targets {
            for nu in [1.0, 10.0] {
                let o = OracleVelocity::new(PriorKind::StudentT { nu }, target.clone())?;
                let grids = [ProbeGrid::around_atoms(target), far_atom_probe()?.1];
                for grid in grids.iter().filter(|g| g.points[0].len() == target.dim()) {
                    for horizon in [0.5, 0.7, 0.9] {
                        let e = estimate_lipschitz(&o, horizon, grid)?;
                        estimates.push(e.spatial.max(e.temporal));
                    }
                }
            }
        }
        let worst = estimates.iter().copied().fold(0.0, f64::max);
        let finite = estimates.iter().all(|v| v.is_finite());
        Ok(CheckResult {
            name: name.into(),
            passed: finite,
            value: worst,
            bound: f64::INFINITY,
            detail: format!("{} estimates, largest {worst:.3}", estimates.len()),
        })
    })();
    out.push(or_failed(name, r));
    let name = "lipschitz: Gaussian prior exceeds Student-t at far-atom probe";
    let r = (|| {
        let (target, grid, horizon) = far_atom_probe()?;
        let t = estimate_lipschitz(&OracleVelocity::new(PriorKind::StudentT { nu: 1.0 }, target.clone())?, horizon, &grid)?;
        let g = estimate_lipschitz(&OracleVelocity::new(PriorKind::Gaussian, target)?, horizon, &grid)?;
        Ok(CheckResult::at_least(name, g.spatial, t.spatial)
            .with_detail(format!("Gaussian {:.3}, Student-t {:.3}", g.spatial, t.spatial)))
    })();
    out.push(or_failed(name, r));
    out
}

/// Worst relative error of backprop against central differences over random small nets.
pub fn gradient_check_error(seed: u64) -> mirrorflow::Result<f64> {
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for (d, hidden) in [(1usize, vec![8usize]), (2, vec![8, 8]), (3, vec![6, 5, 4])] {
        let arch = Architecture {
            hidden,
            time_frequencies: 2,
        };
        let model = MlpVelocity::random(d, &arch, rng.random());
        let mut batch = TrainingBatch::default();
        for _ in 0..5 {
            let z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            batch.push(&z, rng.random(), &y);
        }
        let (_, grad) = model.loss_and_grad(&batch)?;
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let mut probe = model.clone();
        for i in 0..grad.len() {
            let p = model.params()[i];
            let eps = 1e-6 * p.abs().max(1.0);
            probe.params_mut()[i] = p + eps;
            let (up, _) = probe.loss_and_grad(&batch)?;
            probe.params_mut()[i] = p - eps;
            let (down, _) = probe.loss_and_grad(&batch)?;
            probe.params_mut()[i] = p;
            let fd = (up - down) / (2.0 * eps);
            worst = worst.max((fd - grad[i]).abs() / (grad[i].abs().max(1e-3 * gmax) + 1e-8));
        }
    }
    Ok(worst)
}

/// Pairs `(z₀ ~ prior, z₁ = z*)`.
pub struct SingleAtomPairs {
    pub prior: Prior,
    pub atom: Vec<f64>,
}

impl PairProvider for SingleAtomPairs {
    fn dim(&self) -> usize {
        self.atom.len()
    }

    fn draw_pair(&mut self, rng: &mut ChaCha8Rng, z0: &mut [f64], z1: &mut [f64]) {
        self.prior.draw(rng, z0);
        z1.copy_from_slice(&self.atom);
    }
}

/// Trains on one atom and returns `(probe-grid MSE, 0.05·(1 + ‖z*‖²))`.
pub fn single_atom_training(atom: Vec<f64>, cfg: &TrainConfig, arch: &Architecture) -> mirrorflow::Result<(f64, f64)> {
    let d = atom.len();
    let prior = Prior::student_t(d, 10.0)?;
    let target = FiniteAtomTarget::single(atom.clone())?;
    let oracle = OracleVelocity::new(PriorKind::StudentT { nu: 10.0 }, target.clone())?;
    let mut pairs = SingleAtomPairs { prior, atom: atom.clone() };
    let (model, _) = train(MlpVelocity::new(d, arch, cfg.seed ^ 0x5151), cfg, &mut pairs)?;
    let mse = velocity_mse_on_grid(&model, &oracle, &ProbeGrid::around_atoms(&target), 0.9)?;
    Ok((mse, 0.05 * (1.0 + atom.iter().map(|v| v * v).sum::<f64>())))
}

/// Two identical training runs must give bit-identical parameters.
pub fn training_is_deterministic(steps: usize) -> mirrorflow::Result<bool> {
    let arch = Architecture {
        hidden: vec![16, 16],
        time_frequencies: 2,
    };
    let cfg = TrainConfig {
        steps,
        batch_size: 32,
        seed: 7,
        ..TrainConfig::default()
    };
    let run = || -> mirrorflow::Result<Vec<u64>> {
        let mut pairs = SingleAtomPairs {
            prior: Prior::student_t(2, 10.0)?,
            atom: vec![1.0, -1.0],
        };
        let (m, _) = train(MlpVelocity::new(2, &arch, 3), &cfg, &mut pairs)?;
        Ok(m.params().iter().map(|p| p.to_bits()).collect())
    };
    Ok(run()? == run()?)
}

pub fn model_checks(training_steps: usize) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let name = "model: backprop vs finite differences";
    out.push(or_failed(name, gradient_check_error(11).map(|e| CheckResult::at_most(name, e, 1e-4))));
    let name = "model: training is bit-exact";
    out.push(or_failed(
        name,
        training_is_deterministic(50).map(|same| CheckResult {
            name: name.into(),
            passed: same,
            value: if same { 0.0 } else { 1.0 },
            bound: 0.0,
            detail: String::new(),
        }),
    ));
    let name = "model: single-atom trained field";
    let cfg = TrainConfig {
        steps: training_steps,
        seed: 1,
        ..TrainConfig::default()
    };
    out.push(or_failed(
        name,
        single_atom_training(vec![2.0], &cfg, &Architecture::default())
            .map(|(mse, bound)| CheckResult::at_most(name, mse, bound)),
    ));
    out
}

fn gaussian_batch(n: usize, d: usize, shift: f64, seed: u64) -> mirrorflow::Result<SampleBatch> {
    let mut rng = rng_from_seed(seed);
    let data = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect();
    SampleBatch::new(data, d, Space::Primal, BatchMeta::new(Some(seed), "gaussian"))
}

pub fn metric_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let r = (|| -> mirrorflow::Result<Vec<CheckResult>> {
        let a = gaussian_batch(2000, 2, 0.0, 1)?;
        let b = gaussian_batch(2000, 2, 0.0, 2)?;
        let c = gaussian_batch(2000, 2, 1.0, 3)?;
        let (same, _) = mmd_squared(&a, &a, None)?;
        let (near, _) = mmd_squared(&a, &b, None)?;
        let (far, _) = mmd_squared(&a, &c, None)?;
        let kl_same = kl_knn(&a, &b, 5)?;
        let kl_far = kl_knn(&a, &c, 5)?;
        let w2 = w2_exact(&gaussian_batch(300, 2, 0.0, 4)?, &gaussian_batch(300, 2, 0.0, 4)?)?;
        let square = unit_square();
        let inside = SampleBatch::from_rows(&[vec![0.0, 0.0], vec![0.5, -0.5]], Space::Primal, BatchMeta::default())?;
        Ok(vec![
            CheckResult::at_most("metrics: MMD² of a batch with itself", same.abs(), 1e-12),
            CheckResult::at_least("metrics: MMD² separates shifted Gaussians", far, 10.0 * near)
                .with_detail(format!("shifted {far:.3e}, matched {near:.3e}")),
            CheckResult::at_most("metrics: KL of matched Gaussians", kl_same.abs(), 0.1),
            CheckResult::at_most("metrics: KL of shifted Gaussians", (kl_far - 1.0).abs(), 0.15)
                .with_detail(format!("estimate {kl_far:.4}, exact 1")),
            CheckResult::at_most("metrics: W2 of identical batches", w2, 1e-12),
            CheckResult::at_least("metrics: feasibility of interior points", feasibility_rate(&square, &inside), 1.0),
        ])
    })();
    match r {
        Ok(v) => out.extend(v),
        Err(e) => out.push(CheckResult::failed("metrics", e)),
    }
    out
}

/// The full verification table.
pub fn run_verify(verbose: bool) -> Vec<CheckResult> {
    let mut all = Vec::new();
    all.extend(geometry_checks(1000, 1));
    all.extend(tail_checks(1_000_000, 1));
    all.extend(oracle_checks(2));
    all.extend(lipschitz_checks());
    all.extend(model_checks(2000));
    all.extend(metric_checks());
    for c in &all {
        println!("{}", format_line(c, verbose));
    }
    all
}

pub fn format_line(c: &CheckResult, verbose: bool) -> String {
    let status = if c.passed { "PASS" } else { "FAIL" };
    let mut line = format!("{status}  {}", c.name);
    if verbose || !c.passed {
        line.push_str(&format!("  value={:.6e} bound={:.6e}", c.value, c.bound));
        if !c.detail.is_empty() {
            line.push_str(&format!("  ({})", c.detail));
        }
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_flipped_gradient_breaks_round_trip() {
        let map = MirrorMap::regularized(unit_square(), 0.5).unwrap();
        let points = interior_points(&map, 50, 3);
        let flipped = |m: &MirrorMap, x: &[f64]| m.gradient(x).map(|g| g.into_iter().map(|v| -v).collect());
        assert!(!check_round_trip("square", &map, &points, &flipped).passed);
        assert!(check_round_trip("square", &map, &points, &exact_gradient).passed);
    }

    #[test]
    fn quick_checks_pass() {
        for c in oracle_checks(5).into_iter().chain(metric_checks()) {
            assert!(c.passed, "{}", format_line(&c, true));
        }
        assert!(gradient_check_error(2).unwrap() <= 1e-4);
        assert!(training_is_deterministic(10).unwrap());
    }

    #[test]
    fn verbose_lines_carry_residuals() {
        let c = CheckResult::at_most("x", 1e-10, 1e-8);
        assert_eq!(format_line(&c, false), "PASS  x");
        assert!(format_line(&c, true).contains("value=1.000000e-10"));
    }
}
