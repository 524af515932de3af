use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mirrorflow::{MlpVelocity, SampleBatch};
use mirrorflow_bench::experiment::{
    build_map, evaluate, method_dir, methods, metrics_path, run_experiment, sample_method, samples_path,
    train_method, write_json, Problem,
};
use mirrorflow_bench::verify::run_verify;
use mirrorflow_bench::{parse_config, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mirrorflow", version, about = "Mirror flow matching on convex domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured method for one seed and save a checkpoint.
    Train(RunArgs),
    /// Sample from a saved checkpoint.
    Sample(RunArgs),
    /// Evaluate saved samples against a fresh reference draw.
    Eval(RunArgs),
    /// Run the numerical verification suite.
    Verify {
        #[arg(long)]
        verbose: bool,
    },
    /// Run every method on every configured seed and write reports.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        verbose: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    verbose: bool,
}

fn load(config: &Path, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(config)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("model_seed{seed}.ckpt"))
}

fn single_run(args: RunArgs, phase: &str) -> Result<()> {
    let cfg = load(&args.config, args.out)?;
    let seed = args.seed.unwrap_or(cfg.seeds[0]);
    let problem = Problem::build(&cfg)?;
    let method = methods(&cfg).remove(0);
    let dir = method_dir(&cfg, &method);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    match phase {
        "train" => {
            let data = problem.training_data(&cfg, seed)?;
            let map = build_map(&problem.domain, &method)?;
            let trained = train_method(&cfg, &map, &method, &data, seed)?;
            trained.model.save_params(&checkpoint_path(&dir, seed))?;
            write_json(&dir.join(format!("train_report_seed{seed}.json")), &trained.report)?;
            println!(
                "{}: trained seed {seed}, loss {:.4e} -> {:.4e}",
                method.name, trained.report.initial_loss, trained.report.final_loss
            );
        }
        "sample" => {
            let ckpt = checkpoint_path(&dir, seed);
            let model = MlpVelocity::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let map = build_map(&problem.domain, &method)?;
            let samples = sample_method(&cfg, &map, &method, &model, seed)?;
            let path = samples_path(&dir, seed);
            samples.write_csv(&path)?;
            println!("{}: wrote {} samples to {}", method.name, samples.len(), path.display());
        }
        "eval" => {
            let path = samples_path(&dir, seed);
            let samples = SampleBatch::read_csv(&path).with_context(|| format!("reading {}", path.display()))?;
            let reference = problem.reference(&cfg, seed)?;
            let metrics = evaluate(&cfg, &problem, &samples, &reference)?;
            write_json(&metrics_path(&dir, seed), &metrics)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        other => bail!("unknown phase {other}"),
    }
    if args.verbose {
        eprintln!("output directory: {}", dir.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(a) => single_run(a, "train").map(|_| true),
        Command::Sample(a) => single_run(a, "sample").map(|_| true),
        Command::Eval(a) => single_run(a, "eval").map(|_| true),
        Command::Verify { verbose } => {
            let results = run_verify(verbose);
            let failed = results.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", results.len());
            Ok(failed == 0)
        }
        Command::Experiment { config, out, verbose } => {
            let cfg = load(&config, out)?;
            let report = run_experiment(&cfg)?;
            let md = std::fs::read_to_string(cfg.output_dir.join("report.md"))?;
            print!("{md}");
            if verbose {
                for t in &report.timings {
                    eprintln!("{} seed {} {}: {:.2} s", t.method, t.seed, t.phase, t.seconds);
                }
            }
            Ok(report.methods.iter().all(|m| m.aggregate.n_failed == 0))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
