//! Multi-seed experiment runs: data, training, sampling, evaluation and reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mirrorflow::flow::{mirror_sample, mirror_train, TrainedMirrorFlow};
use mirrorflow::metrics::{feasibility_rate, kl_knn, mmd_squared, mode_occupancy, w2_exact};
use mirrorflow::prior::{rng_from_seed, sample_truncated_mixture};
use mirrorflow::{
    ConvexDomain, MapVariant, MetricReport, MirrorMap, Prior, PriorKind, SampleBatch, TruncatedMixtureTarget,
    VelocityField,
};
use serde::{Deserialize, Serialize};

use crate::config::{Compare, ExperimentConfig};
use crate::{mix_seed, Result};

const STREAM_TRAIN_DATA: u64 = 1;
const STREAM_REFERENCE: u64 = 2;
const STREAM_REFERENCE_ALT: u64 = 3;
const STREAM_TRAINING: u64 = 4;
const STREAM_SAMPLER: u64 = 5;
const OCCUPANCY_PROPOSALS: usize = 1_000_000;

/// One prior/map combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub name: String,
    pub map: MapVariant,
    pub prior: PriorKind,
}

impl Method {
    pub fn new(map: MapVariant, prior: PriorKind) -> Self {
        let m = match map {
            MapVariant::Regularized { .. } => "mirror",
            MapVariant::LogBarrier => "log_barrier",
        };
        let p = match prior {
            PriorKind::StudentT { .. } => "t_flow",
            PriorKind::Gaussian => "g_flow",
        };
        Method {
            name: format!("{m}_{p}"),
            map,
            prior,
        }
    }
}

/// Methods an experiment runs; the configured prior and map come first.
pub fn methods(cfg: &ExperimentConfig) -> Vec<Method> {
    let t = match cfg.prior {
        PriorKind::StudentT { nu } => PriorKind::StudentT { nu },
        PriorKind::Gaussian => PriorKind::StudentT { nu: 10.0 },
    };
    let kappa = match cfg.map {
        MapVariant::Regularized { kappa } => kappa,
        MapVariant::LogBarrier => 0.5,
    };
    let priors = [cfg.prior, if cfg.prior == PriorKind::Gaussian { t } else { PriorKind::Gaussian }];
    let maps = [cfg.map, match cfg.map {
        MapVariant::LogBarrier => MapVariant::Regularized { kappa },
        MapVariant::Regularized { .. } => MapVariant::LogBarrier,
    }];
    match cfg.compare {
        Compare::None => vec![Method::new(cfg.map, cfg.prior)],
        Compare::Priors => priors.iter().map(|&p| Method::new(cfg.map, p)).collect(),
        Compare::Grid => maps
            .iter()
            .flat_map(|&m| priors.iter().map(move |&p| Method::new(m, p)))
            .collect(),
    }
}

/// Domain and target built from a config.
#[derive(Clone, Debug)]
pub struct Problem {
    pub domain: ConvexDomain,
    pub target: TruncatedMixtureTarget,
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let domain = cfg.build_domain()?;
        let target = cfg.build_target(&domain)?;
        Ok(Problem { domain, target })
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.target.components().iter().map(|c| c.mean.clone()).collect()
    }

    /// Truncation-renormalized component weights from `OCCUPANCY_PROPOSALS` proposals per component.
    pub fn renormalized_weights(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let acc = self.target.estimate_acceptance(OCCUPANCY_PROPOSALS, &mut rng);
        self.target.truncated_weights(&acc)
    }

    pub fn training_data(&self, cfg: &ExperimentConfig, seed: u64) -> Result<SampleBatch> {
        Ok(sample_truncated_mixture(
            &self.target,
            cfg.data.n_train,
            mix_seed(seed, STREAM_TRAIN_DATA),
        )?)
    }

    /// Fresh ground-truth draw used for evaluation.
    pub fn reference(&self, cfg: &ExperimentConfig, seed: u64) -> Result<SampleBatch> {
        Ok(sample_truncated_mixture(
            &self.target,
            cfg.data.n_reference,
            mix_seed(seed, STREAM_REFERENCE),
        )?)
    }

    /// A second independent ground-truth draw, for self-calibrated thresholds.
    pub fn reference_alt(&self, cfg: &ExperimentConfig, seed: u64) -> Result<SampleBatch> {
        Ok(sample_truncated_mixture(
            &self.target,
            cfg.data.n_reference,
            mix_seed(seed, STREAM_REFERENCE_ALT),
        )?)
    }
}

pub fn build_map(domain: &ConvexDomain, method: &Method) -> Result<MirrorMap> {
    Ok(MirrorMap::new(domain.clone(), method.map)?)
}

pub fn train_method(
    cfg: &ExperimentConfig,
    map: &MirrorMap,
    method: &Method,
    data: &SampleBatch,
    seed: u64,
) -> Result<TrainedMirrorFlow> {
    let prior = Prior::from_kind(method.prior, map.dim())?;
    let mut train = cfg.train.clone();
    train.seed = mix_seed(seed, STREAM_TRAINING) ^ cfg.train.seed;
    Ok(mirror_train(map, data, &prior, &cfg.model, &train)?)
}

pub fn sample_method<V: VelocityField + ?Sized>(
    cfg: &ExperimentConfig,
    map: &MirrorMap,
    method: &Method,
    v: &V,
    seed: u64,
) -> Result<SampleBatch> {
    let prior = Prior::from_kind(method.prior, map.dim())?;
    let sampler = cfg.sampler_config(mix_seed(seed, STREAM_SAMPLER))?;
    Ok(mirror_sample(map, v, &sampler, &prior)?)
}

/// Metrics of `generated` against `reference`; KL is `KL(reference ‖ generated)`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    problem: &Problem,
    generated: &SampleBatch,
    reference: &SampleBatch,
) -> Result<MetricReport> {
    let (mmd, sigma) = mmd_squared(generated, reference, None)?;
    let kl = kl_knn(reference, generated, cfg.evaluation.kl_k)?;
    let w2 = match cfg.evaluation.w2_points {
        Some(n) => {
            let n = n.min(generated.len()).min(reference.len());
            let head = |b: &SampleBatch| {
                SampleBatch::new(b.data()[..n * b.dim()].to_vec(), b.dim(), b.space(), b.meta().clone())
            };
            Some(w2_exact(&head(generated)?, &head(reference)?)?)
        }
        None => None,
    };
    Ok(MetricReport {
        mmd_squared: mmd,
        kl,
        w2,
        feasibility: feasibility_rate(&problem.domain, generated),
        n_gen: generated.len(),
        n_ref: reference.len(),
        kernel_bandwidth: sigma,
        kl_k: cfg.evaluation.kl_k,
        occupancy: cfg
            .evaluation
            .occupancy_check
            .then(|| mode_occupancy(generated, &problem.means())),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (denominator `n − 1`; zero for one value).
    pub std: f64,
    pub n: usize,
}

/// Welford's running mean and variance.
pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let n = values.len();
    let std = if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 };
    Some(MeanStd { mean, std, n })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: Option<MetricReport>,
    pub train_final_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mmd_squared: Option<MeanStd>,
    pub kl: Option<MeanStd>,
    pub w2: Option<MeanStd>,
    pub feasibility: Option<MeanStd>,
    pub n_failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub seeds: Vec<SeedOutcome>,
    pub aggregate: Aggregate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub method: String,
    pub seed: u64,
    pub phase: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub methods: Vec<MethodReport>,
    /// Renormalized mixture weights, when the occupancy check is on.
    pub expected_occupancy: Option<Vec<f64>>,
    /// Wall-clock per phase; kept out of `aggregate.json` so that file is reproducible.
    #[serde(skip)]
    pub timings: Vec<PhaseTiming>,
}

impl ExperimentReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method.name == name)
    }
}

fn aggregate(seeds: &[SeedOutcome]) -> Aggregate {
    let ok: Vec<&MetricReport> = seeds.iter().filter_map(|s| s.metrics.as_ref()).collect();
    let collect = |f: &dyn Fn(&MetricReport) -> Option<f64>| -> Option<MeanStd> {
        let v: Vec<f64> = ok.iter().filter_map(|m| f(m)).collect();
        mean_std(&v)
    };
    Aggregate {
        mmd_squared: collect(&|m| Some(m.mmd_squared)),
        kl: collect(&|m| Some(m.kl)),
        w2: collect(&|m| m.w2),
        feasibility: collect(&|m| Some(m.feasibility)),
        n_failed: seeds.len() - ok.len(),
    }
}

pub fn method_dir(cfg: &ExperimentConfig, method: &Method) -> PathBuf {
    cfg.output_dir.join(&method.name)
}

pub fn samples_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("samples_seed{seed}.csv"))
}

pub fn metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("metrics_seed{seed}.json"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

struct Timer<'a> {
    timings: &'a mut Vec<PhaseTiming>,
    method: String,
    seed: u64,
}

impl Timer<'_> {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.timings.push(PhaseTiming {
            method: self.method.clone(),
            seed: self.seed,
            phase: phase.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn run_seed(
    cfg: &ExperimentConfig,
    problem: &Problem,
    method: &Method,
    seed: u64,
    timer: &mut Timer<'_>,
) -> Result<(MetricReport, f64)> {
    let dir = method_dir(cfg, method);
    fs::create_dir_all(&dir)?;
    let data = timer.time("data", || problem.training_data(cfg, seed))?;
    let map = build_map(&problem.domain, method)?;
    let trained = timer.time("train", || train_method(cfg, &map, method, &data, seed))?;
    let generated = timer.time("sample", || sample_method(cfg, &map, method, &trained.model, seed))?;
    generated.write_csv(&samples_path(&dir, seed))?;
    let metrics = timer.time("evaluate", || {
        let reference = problem.reference(cfg, seed)?;
        evaluate(cfg, problem, &generated, &reference)
    })?;
    write_json(&metrics_path(&dir, seed), &metrics)?;
    Ok((metrics, trained.report.final_loss))
}

/// Runs every method on every seed. A failing seed is recorded and the run continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let problem = Problem::build(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut timings = Vec::new();
    let mut reports = Vec::new();
    for method in methods(cfg) {
        let mut seeds = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let mut timer = Timer {
                timings: &mut timings,
                method: method.name.clone(),
                seed,
            };
            let outcome = match run_seed(cfg, &problem, &method, seed, &mut timer) {
                Ok((metrics, loss)) => SeedOutcome {
                    seed,
                    metrics: Some(metrics),
                    train_final_loss: Some(loss),
                    error: None,
                },
                Err(e) => SeedOutcome {
                    seed,
                    metrics: None,
                    train_final_loss: None,
                    error: Some(e.to_string()),
                },
            };
            seeds.push(outcome);
        }
        let aggregate = aggregate(&seeds);
        reports.push(MethodReport {
            method,
            seeds,
            aggregate,
        });
    }
    let expected_occupancy = cfg
        .evaluation
        .occupancy_check
        .then(|| problem.renormalized_weights(mix_seed(0, STREAM_REFERENCE_ALT)));
    let report = ExperimentReport {
        config: cfg.clone(),
        methods: reports,
        expected_occupancy,
        timings,
    };
    write_json(&cfg.output_dir.join("aggregate.json"), &report)?;
    write_json(&cfg.output_dir.join("timings.json"), &report.timings)?;
    fs::write(cfg.output_dir.join("report.md"), render_markdown(&report))?;
    Ok(report)
}

fn cell(v: Option<MeanStd>) -> String {
    match v {
        Some(s) => format!("{:.3e} ± {:.1e}", s.mean, s.std),
        None => "n/a".into(),
    }
}

/// Table with one row per method and `mean ± std` cells.
pub fn render_markdown(report: &ExperimentReport) -> String {
    let cfg = &report.config;
    let mut s = String::new();
    let title = cfg
        .preset
        .map(|p| serde_json::to_value(p).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default())
        .unwrap_or_else(|| "custom".into());
    let _ = writeln!(s, "# Experiment: {title}\n");
    let _ = writeln!(
        s,
        "d = {}, h = {}, T = {}, n = {}, train = {}, reference = {}, seeds = {:?}\n",
        cfg.dim(),
        cfg.sampler.h,
        cfg.sampler.t_stop,
        cfg.sampler.n,
        cfg.data.n_train,
        cfg.data.n_reference,
        cfg.seeds
    );
    let _ = writeln!(s, "| Method | MMD² | KL | W2 | Feasibility | Failed seeds |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for m in &report.methods {
        let a = &m.aggregate;
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            m.method.name,
            cell(a.mmd_squared),
            cell(a.kl),
            cell(a.w2),
            a.feasibility.map_or("n/a".into(), |f| format!("{:.4}", f.mean)),
            a.n_failed
        );
    }
    if let Some(expected) = &report.expected_occupancy {
        let _ = writeln!(s, "\nExpected mode occupancy: {}", fmt_vec(expected));
        for m in &report.methods {
            for seed in &m.seeds {
                if let Some(occ) = seed.metrics.as_ref().and_then(|r| r.occupancy.as_ref()) {
                    let _ = writeln!(s, "- {} seed {}: {}", m.method.name, seed.seed, fmt_vec(occ));
                }
            }
        }
    }
    let failures: Vec<String> = report
        .methods
        .iter()
        .flat_map(|m| {
            m.seeds
                .iter()
                .filter_map(move |o| o.error.as_ref().map(|e| format!("- {} seed {}: {e}", m.method.name, o.seed)))
        })
        .collect();
    if !failures.is_empty() {
        let _ = writeln!(s, "\nFailed seeds:\n{}", failures.join("\n"));
    }
    let total: f64 = report.timings.iter().map(|t| t.seconds).sum();
    let _ = writeln!(s, "\nWall clock: {total:.1} s (per phase in timings.json)");
    s
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}
