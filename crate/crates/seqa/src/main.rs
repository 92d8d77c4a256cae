//! Command-line front end: evaluate, attack, consistency, ablate, report.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use seqa::run::{
    cmd_ablate, cmd_attack, cmd_consistency, cmd_evaluate, cmd_report, AblationAxis, RunConfig,
    RunManifest,
};
use seqa::scorer::ScorerKind;

#[derive(Parser)]
#[command(
    name = "seqa",
    version,
    about = "Answer multiple-choice commonsense questions by semantic voting over sampled answers, with LM-scoring baselines and a robustness harness."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a dataset and report accuracy.
    Evaluate(RunArgs),
    /// Attack the gold choices of correctly answered examples.
    Attack(RunArgs),
    /// Measure rank stability under paraphrased choices.
    Consistency(RunArgs),
    /// Sweep one axis (temperature, sample_size, weight_fn, backend_grid).
    Ablate(AblateArgs),
    /// Merge finished runs into one summary table plus curve files.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the scoring method (seqa, pro_a, pro_q, mi_qa).
    #[arg(long)]
    scorer: Option<ScorerKind>,
    /// Override the dataset file path.
    #[arg(long)]
    dataset_path: Option<PathBuf>,
    /// Override the generation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of sampled voters (K).
    #[arg(long)]
    sample_count: Option<usize>,
    /// Override the voting weight parameter (temperature for exp/sigmoid).
    #[arg(long)]
    temperature: Option<f64>,
    /// Override the backend cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)
            .with_context(|| format!("loading config {}", self.config.display()))?;
        if let Some(dir) = &self.out_dir {
            config.output.dir = dir.clone();
        }
        if let Some(kind) = self.scorer {
            config.scorer = kind;
        }
        if let Some(path) = &self.dataset_path {
            config.dataset.path = path.clone();
        }
        if let Some(seed) = self.seed {
            config.generation.seed = seed;
        }
        if let Some(k) = self.sample_count {
            config.generation.sample_count = k;
        }
        if let Some(t) = self.temperature {
            config.voting.weight_param = t;
        }
        if let Some(dir) = &self.cache_dir {
            config.output.cache_dir = Some(dir.clone());
        }
        Ok(config)
    }
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Axis to sweep: temperature, sample_size, weight_fn, or backend_grid.
    #[arg(long)]
    axis: AblationAxis,
    /// Comma-separated axis values; the axis default when omitted.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<String>>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory the merged summary and curve files go to.
    #[arg(long)]
    out_dir: PathBuf,
    /// Finished run directories (each holding a manifest).
    #[arg(required = true)]
    run_dirs: Vec<PathBuf>,
}

fn print_manifest_summary(manifest: &RunManifest) {
    println!(
        "{} {} on {} ({} examples)",
        manifest.command, manifest.scorer, manifest.dataset, manifest.example_count
    );
    if let Some(obj) = manifest.metrics.as_object() {
        let mut keys: Vec<&String> = obj.keys().collect();
        keys.sort();
        for key in keys {
            match &obj[key] {
                serde_json::Value::Number(n) => println!("  {key}: {n}"),
                serde_json::Value::Null => {}
                serde_json::Value::String(s) => println!("  {key}: {s}"),
                serde_json::Value::Bool(b) => println!("  {key}: {b}"),
                _ => {}
            }
        }
    }
    println!("  results: {} (sha256 {})", manifest.results_file, &manifest.results_sha256[..12]);
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Evaluate(args) => {
            let manifest = cmd_evaluate(&args.load()?)?;
            print_manifest_summary(&manifest);
        }
        Command::Attack(args) => {
            let manifest = cmd_attack(&args.load()?)?;
            print_manifest_summary(&manifest);
        }
        Command::Consistency(args) => {
            let manifest = cmd_consistency(&args.load()?)?;
            print_manifest_summary(&manifest);
        }
        Command::Ablate(args) => {
            let manifest = cmd_ablate(&args.run.load()?, args.axis, args.values)?;
            print_manifest_summary(&manifest);
        }
        Command::Report(args) => {
            let summary = cmd_report(&args.run_dirs, &args.out_dir)?;
            println!("report written to {}", summary.display());
        }
    }
    Ok(())
}
