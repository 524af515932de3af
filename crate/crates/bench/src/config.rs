//! Experiment configuration files.
//!
//! A config is a JSON object. Every key is optional; a `preset` fills all fields and
//! explicit keys override it. Unknown keys are rejected. See the README for the schema.

use std::path::{Path, PathBuf};

use mirrorflow::prior::rng_from_seed;
use mirrorflow::{
    Architecture, ConvexDomain, MapVariant, MixtureComponent, PriorKind, SamplerConfig, TrainConfig,
    TruncatedMixtureTarget,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::polytope::{generate_random_polytope, lift_offsets};
use crate::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Polytope2d,
    Polytope10d,
    Ball6d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// `{x : a x < b}` with `a` given row by row.
    Polytope { a: Vec<Vec<f64>>, b: Vec<f64> },
    Ball { radius: f64, dim: usize },
    /// Seeded random polytope; offsets are raised so that `contains` holds every point
    /// in `must_contain` with the given distance margin.
    RandomPolytope {
        dim: usize,
        rows: usize,
        seed: u64,
        #[serde(default)]
        must_contain: Vec<Vec<f64>>,
        #[serde(default)]
        margin: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Mixture { components: Vec<MixtureComponent> },
    /// Uniform mixture with `n_random` seeded means at distance `margin` inside the
    /// domain plus the alternating `±3` patterns, all with covariance `variance · I`.
    PatternMixture {
        n_random: usize,
        n_patterns: usize,
        seed: u64,
        variance: f64,
        margin: f64,
    },
}

/// Which prior/map combinations an experiment trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compare {
    /// Only the configured prior and map.
    #[default]
    None,
    /// Student-t and Gaussian priors with the configured map.
    Priors,
    /// Both priors with both the regularized and the log-barrier map.
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub h: f64,
    pub t_stop: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSettings {
    pub n_train: usize,
    pub n_reference: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub kl_k: usize,
    /// Points per side for exact W2; `None` skips it.
    pub w2_points: Option<usize>,
    pub occupancy_check: bool,
}

/// A fully expanded and validated experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Option<Preset>,
    pub domain: DomainSpec,
    pub target: TargetSpec,
    pub map: MapVariant,
    pub prior: PriorKind,
    pub compare: Compare,
    pub model: Architecture,
    pub train: TrainConfig,
    pub sampler: SamplerSettings,
    pub data: DataSettings,
    pub evaluation: EvalSettings,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    variant: Option<String>,
    kappa: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    kind: Option<String>,
    nu: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    hidden: Option<Vec<usize>>,
    time_frequencies: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    steps: Option<usize>,
    grad_clip_norm: Option<f64>,
    seed: Option<u64>,
    adam_betas: Option<(f64, f64)>,
    adam_eps: Option<f64>,
    final_lr_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampler {
    h: Option<f64>,
    t_stop: Option<f64>,
    n: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    n_train: Option<usize>,
    n_reference: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEval {
    kl_k: Option<usize>,
    w2_points: Option<usize>,
    occupancy_check: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<Preset>,
    domain: Option<DomainSpec>,
    target: Option<TargetSpec>,
    map: Option<RawMap>,
    prior: Option<RawPrior>,
    compare: Option<Compare>,
    model: Option<RawModel>,
    train: Option<RawTrain>,
    sampler: Option<RawSampler>,
    data: Option<RawData>,
    evaluation: Option<RawEval>,
    seeds: Option<Vec<u64>>,
    output_dir: Option<PathBuf>,
}

const APPENDIX_A: [[f64; 2]; 5] = [[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-5.0, 1.0], [-1.0 / 3.0, 1.0]];
const APPENDIX_B: [f64; 5] = [10.0, 30.0, 1.0, 90.0, 5.0];

/// Alternating `±3` means: `(−3,−3,3,3,…)`, `(−3,3,−3,3,…)` and their negatives.
pub fn sign_patterns(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let base = [
        (0..dim).map(|j| if (j / 2) % 2 == 0 { -3.0 } else { 3.0 }).collect::<Vec<f64>>(),
        (0..dim).map(|j| if j % 2 == 0 { -3.0 } else { 3.0 }).collect::<Vec<f64>>(),
    ];
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let p = &base[(k / 2) % 2];
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        out.push(p.iter().map(|v| sign * v).collect());
    }
    out
}

impl ExperimentConfig {
    /// Full settings of a preset.
    pub fn preset(preset: Preset) -> Self {
        let common = |domain, target, map, prior, out: &str| ExperimentConfig {
            preset: Some(preset),
            domain,
            target,
            map,
            prior,
            compare: Compare::None,
            model: Architecture::default(),
            train: TrainConfig {
                steps: 4000,
                ..TrainConfig::default()
            },
            sampler: SamplerSettings {
                h: 0.1,
                t_stop: 0.9,
                n: 5000,
            },
            data: DataSettings {
                n_train: 20_000,
                n_reference: 5000,
            },
            evaluation: EvalSettings {
                kl_k: 5,
                w2_points: None,
                occupancy_check: false,
            },
            seeds: vec![0],
            output_dir: PathBuf::from(out),
        };
        match preset {
            Preset::Polytope2d => common(
                DomainSpec::Polytope {
                    a: APPENDIX_A.iter().map(|r| r.to_vec()).collect(),
                    b: APPENDIX_B.to_vec(),
                },
                TargetSpec::Mixture {
                    components: vec![
                        MixtureComponent {
                            mean: vec![-10.0, 0.0],
                            diag_cov: vec![8.0, 2.0],
                            weight: 0.6,
                        },
                        MixtureComponent {
                            mean: vec![-15.0, -10.0],
                            diag_cov: vec![1.0, 1.0],
                            weight: 0.2,
                        },
                        MixtureComponent {
                            mean: vec![3.0, 3.0],
                            diag_cov: vec![0.5, 0.25],
                            weight: 0.2,
                        },
                    ],
                },
                MapVariant::Regularized { kappa: 0.5 },
                PriorKind::StudentT { nu: 10.0 },
                "runs/polytope2d",
            ),
            Preset::Polytope10d => common(
                DomainSpec::RandomPolytope {
                    dim: 10,
                    rows: 30,
                    seed: 0,
                    must_contain: sign_patterns(10, 4),
                    margin: 1.5,
                },
                TargetSpec::PatternMixture {
                    n_random: 4,
                    n_patterns: 4,
                    seed: 0,
                    variance: 0.4,
                    margin: 1.5,
                },
                MapVariant::Regularized { kappa: 0.3 },
                PriorKind::StudentT { nu: 10.0 },
                "runs/polytope10d",
            ),
            Preset::Ball6d => common(
                DomainSpec::Ball { radius: 12.0, dim: 6 },
                TargetSpec::PatternMixture {
                    n_random: 4,
                    n_patterns: 4,
                    seed: 0,
                    variance: 0.4,
                    margin: 1.5,
                },
                MapVariant::Regularized { kappa: 0.3 },
                PriorKind::StudentT { nu: 10.0 },
                "runs/ball6d",
            ),
        }
    }

    /// Parses and validates a JSON config.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        let mut cfg = match raw.preset {
            Some(p) => Self::preset(p),
            None => {
                let (Some(domain), Some(target)) = (raw.domain.clone(), raw.target.clone()) else {
                    return Err(BenchError::Config(
                        "without a preset both `domain` and `target` are required".into(),
                    ));
                };
                ExperimentConfig {
                    preset: None,
                    domain,
                    target,
                    output_dir: PathBuf::from("runs/custom"),
                    ..Self::preset(Preset::Polytope2d)
                }
            }
        };
        cfg.apply(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, raw: RawConfig) -> Result<()> {
        if let Some(d) = raw.domain {
            self.domain = d;
        }
        if let Some(t) = raw.target {
            self.target = t;
        }
        if let Some(m) = raw.map {
            let kappa = m.kappa.or(match self.map {
                MapVariant::Regularized { kappa } => Some(kappa),
                MapVariant::LogBarrier => None,
            });
            let variant = m.variant.as_deref().unwrap_or(match (self.map, m.kappa) {
                (_, Some(_)) | (MapVariant::Regularized { .. }, None) => "regularized",
                (MapVariant::LogBarrier, None) => "log_barrier",
            });
            self.map = match variant {
                "regularized" => MapVariant::Regularized {
                    kappa: kappa.ok_or_else(|| BenchError::Config("regularized map needs `kappa`".into()))?,
                },
                "log_barrier" => MapVariant::LogBarrier,
                other => return Err(BenchError::Config(format!("unknown map variant `{other}`"))),
            };
        }
        if let Some(p) = raw.prior {
            let nu = p.nu.or(match self.prior {
                PriorKind::StudentT { nu } => Some(nu),
                PriorKind::Gaussian => None,
            });
            let kind = p.kind.as_deref().unwrap_or(match (self.prior, p.nu) {
                (_, Some(_)) | (PriorKind::StudentT { .. }, None) => "student_t",
                (PriorKind::Gaussian, None) => "gaussian",
            });
            self.prior = match kind {
                "student_t" => PriorKind::StudentT {
                    nu: nu.ok_or_else(|| BenchError::Config("student_t prior needs `nu`".into()))?,
                },
                "gaussian" => PriorKind::Gaussian,
                other => return Err(BenchError::Config(format!("unknown prior kind `{other}`"))),
            };
        }
        if let Some(c) = raw.compare {
            self.compare = c;
        }
        if let Some(m) = raw.model {
            if let Some(h) = m.hidden {
                self.model.hidden = h;
            }
            if let Some(k) = m.time_frequencies {
                self.model.time_frequencies = k;
            }
        }
        if let Some(t) = raw.train {
            let c = &mut self.train;
            c.learning_rate = t.learning_rate.unwrap_or(c.learning_rate);
            c.batch_size = t.batch_size.unwrap_or(c.batch_size);
            c.steps = t.steps.unwrap_or(c.steps);
            c.grad_clip_norm = t.grad_clip_norm.unwrap_or(c.grad_clip_norm);
            c.seed = t.seed.unwrap_or(c.seed);
            c.adam_betas = t.adam_betas.unwrap_or(c.adam_betas);
            c.adam_eps = t.adam_eps.unwrap_or(c.adam_eps);
            c.final_lr_fraction = t.final_lr_fraction.unwrap_or(c.final_lr_fraction);
        }
        if let Some(s) = raw.sampler {
            self.sampler.h = s.h.unwrap_or(self.sampler.h);
            self.sampler.t_stop = s.t_stop.unwrap_or(self.sampler.t_stop);
            self.sampler.n = s.n.unwrap_or(self.sampler.n);
        }
        if let Some(d) = raw.data {
            self.data.n_train = d.n_train.unwrap_or(self.data.n_train);
            self.data.n_reference = d.n_reference.unwrap_or(self.data.n_reference);
        }
        if let Some(e) = raw.evaluation {
            self.evaluation.kl_k = e.kl_k.unwrap_or(self.evaluation.kl_k);
            if e.w2_points.is_some() {
                self.evaluation.w2_points = e.w2_points;
            }
            self.evaluation.occupancy_check = e.occupancy_check.unwrap_or(self.evaluation.occupancy_check);
        }
        if let Some(s) = raw.seeds {
            self.seeds = s;
        }
        if let Some(o) = raw.output_dir {
            self.output_dir = o;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let MapVariant::Regularized { kappa } = self.map {
            if !(kappa > 0.0 && kappa < 1.0) {
                return Err(BenchError::Config(format!("kappa must lie in (0, 1), got {kappa}")));
            }
        }
        if let PriorKind::StudentT { nu } = self.prior {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(BenchError::Config(format!("nu must be positive, got {nu}")));
            }
        }
        self.sampler_config(0).map_err(|e| BenchError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(BenchError::Config("`seeds` must not be empty".into()));
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return Err(BenchError::Config("model.hidden needs positive widths".into()));
        }
        if self.data.n_train == 0 || self.data.n_reference == 0 {
            return Err(BenchError::Config("data sizes must be positive".into()));
        }
        if self.evaluation.kl_k == 0 {
            return Err(BenchError::Config("evaluation.kl_k must be positive".into()));
        }
        if let Some(w) = self.evaluation.w2_points {
            if w == 0 || w > mirrorflow::metrics::W2_MAX_POINTS {
                return Err(BenchError::Config(format!(
                    "evaluation.w2_points must lie in 1..={}",
                    mirrorflow::metrics::W2_MAX_POINTS
                )));
            }
        }
        Ok(())
    }

    pub fn sampler_config(&self, seed: u64) -> mirrorflow::Result<SamplerConfig> {
        SamplerConfig::new(self.sampler.h, self.sampler.t_stop, self.sampler.n, seed)
    }

    pub fn dim(&self) -> usize {
        match &self.domain {
            DomainSpec::Polytope { a, .. } => a.first().map_or(0, Vec::len),
            DomainSpec::Ball { dim, .. } => *dim,
            DomainSpec::RandomPolytope { dim, .. } => *dim,
        }
    }

    pub fn build_domain(&self) -> Result<ConvexDomain> {
        Ok(match &self.domain {
            DomainSpec::Polytope { a, b } => ConvexDomain::polytope(a.clone(), b.clone())?,
            DomainSpec::Ball { radius, dim } => ConvexDomain::ball(*radius, *dim)?,
            DomainSpec::RandomPolytope {
                dim,
                rows,
                seed,
                must_contain,
                margin,
            } => {
                let base = generate_random_polytope(*dim, *rows, *seed)?;
                if must_contain.is_empty() {
                    base
                } else {
                    lift_offsets(&base, must_contain, *margin)?
                }
            }
        })
    }

    pub fn build_target(&self, domain: &ConvexDomain) -> Result<TruncatedMixtureTarget> {
        let components = match &self.target {
            TargetSpec::Mixture { components } => components.clone(),
            TargetSpec::PatternMixture {
                n_random,
                n_patterns,
                seed,
                variance,
                margin,
            } => {
                let d = domain.dim();
                let mut means = random_interior_means(domain, *n_random, *margin, *seed)?;
                means.extend(sign_patterns(d, *n_patterns));
                let k = means.len();
                if k == 0 {
                    return Err(BenchError::Config("pattern mixture has no components".into()));
                }
                means
                    .into_iter()
                    .map(|mean| MixtureComponent {
                        mean,
                        diag_cov: vec![*variance; d],
                        weight: 1.0 / k as f64,
                    })
                    .collect()
            }
        };
        Ok(TruncatedMixtureTarget::new(components, domain.clone())?)
    }
}

/// Uniform draws from `[−L, L]^d` kept when at least `margin` from the boundary.
fn random_interior_means(domain: &ConvexDomain, n: usize, margin: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    const HALF_WIDTH: f64 = 4.0;
    const MAX_DRAWS: usize = 1_000_000;
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(n);
    let mut draws = 0;
    while out.len() < n {
        if draws == MAX_DRAWS {
            return Err(BenchError::Config(format!(
                "could not place {n} means at distance {margin} inside the domain"
            )));
        }
        draws += 1;
        let x: Vec<f64> = (0..domain.dim())
            .map(|_| rng.random_range(-HALF_WIDTH..HALF_WIDTH))
            .collect();
        if domain.boundary_distance(&x) >= margin {
            out.push(x);
        }
    }
    Ok(out)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json_str(&text).map_err(|e| match e {
        BenchError::Config(msg) => BenchError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
