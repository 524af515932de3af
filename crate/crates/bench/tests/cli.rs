use std::fs;
use std::path::Path;
use std::process::Command;

use mirrorflow::{DomainKind, MapVariant, PriorKind, SampleBatch};
use mirrorflow_bench::{parse_config, run_experiment, BenchError, ExperimentConfig};

const SMALL: &str = r#"{
    "preset": "polytope2d",
    "model": {"hidden": [16, 16], "time_frequencies": 2},
    "train": {"steps": 40, "batch_size": 32},
    "sampler": {"n": 200},
    "data": {"n_train": 500, "n_reference": 200},
    "evaluation": {"occupancy_check": true, "w2_points": 100},
    "seeds": [0, 1]
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mirrorflow"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn config_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&write(dir.path(), "a.json", r#"{"preset":"ball6d"}"#)).unwrap();
    let domain = cfg.build_domain().unwrap();
    assert_eq!((domain.kind(), domain.radius(), domain.dim()), (DomainKind::Ball, Some(12.0), 6));
    assert_eq!(cfg.map, MapVariant::Regularized { kappa: 0.3 });
    assert_eq!(cfg.prior, PriorKind::StudentT { nu: 10.0 });

    let cfg = parse_config(&write(dir.path(), "b.json", r#"{"preset":"polytope2d","map":{"kappa":0.5}}"#)).unwrap();
    assert_eq!(cfg.map, MapVariant::Regularized { kappa: 0.5 });
    assert_eq!(cfg.build_domain().unwrap().n_constraints(), 5);

    let err = parse_config(&write(dir.path(), "c.json", r#"{"preset":"polytope2d","sampler":{"h":0.3}}"#)).unwrap_err();
    assert!(matches!(err, BenchError::Config(ref m) if m.contains("c.json")), "{err}");
    assert!(matches!(parse_config(&dir.path().join("missing.json")), Err(BenchError::Io(_))));
}

#[test]
fn experiment_is_deterministic_and_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_json_str(SMALL).unwrap();
    let mut outputs = Vec::new();
    cfg.output_dir = dir.path().join("run");
    for _ in 0..2 {
        let report = run_experiment(&cfg).unwrap();
        let m = &report.methods[0];
        assert_eq!(m.seeds.len(), 2);
        assert_eq!(m.aggregate.n_failed, 0);
        assert_eq!(m.aggregate.feasibility.unwrap().mean, 1.0);
        assert_eq!(m.aggregate.mmd_squared.unwrap().n, 2);
        let method_dir = cfg.output_dir.join("mirror_t_flow");
        let mut files = Vec::new();
        for name in ["samples_seed0.csv", "samples_seed1.csv", "metrics_seed0.json", "metrics_seed1.json"] {
            files.push(fs::read(method_dir.join(name)).unwrap());
        }
        files.push(fs::read(cfg.output_dir.join("aggregate.json")).unwrap());
        assert!(cfg.output_dir.join("report.md").exists());
        let samples = SampleBatch::read_csv(&method_dir.join("samples_seed0.csv")).unwrap();
        assert!(samples.first_infeasible(&cfg.build_domain().unwrap()).is_none());
        outputs.push(files);
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn failing_seed_is_reported_and_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_json_str(SMALL).unwrap();
    cfg.train.learning_rate = 1e12;
    cfg.train.grad_clip_norm = 1e300;
    cfg.output_dir = dir.path().to_path_buf();
    let report = run_experiment(&cfg).unwrap();
    let m = &report.methods[0];
    assert_eq!(m.seeds.len(), 2);
    assert_eq!(m.aggregate.n_failed, 2);
    assert!(m.seeds.iter().all(|s| s.error.is_some() && s.metrics.is_none()));
    let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("Failed seeds"));
}

#[test]
fn train_sample_eval_chain() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.json", SMALL);
    let out = dir.path().join("out");
    for cmd in ["train", "sample", "eval"] {
        let status = bin()
            .args([cmd, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "3"])
            .output()
            .unwrap();
        assert!(status.status.success(), "{cmd}: {}", String::from_utf8_lossy(&status.stderr));
    }
    let method = out.join("mirror_t_flow");
    for name in ["model_seed3.ckpt", "samples_seed3.csv", "metrics_seed3.json", "train_report_seed3.json"] {
        assert!(method.join(name).exists(), "{name}");
    }
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(method.join("metrics_seed3.json")).unwrap()).unwrap();
    assert_eq!(metrics["feasibility"], 1.0);
}

#[test]
fn bad_config_exits_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "bad.json", r#"{"preset":"polytope2d","colour":"red"}"#);
    let out = bin().args(["experiment", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn sample_without_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.json", SMALL);
    let out = bin()
        .args(["sample", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model_seed0.ckpt"));
}
