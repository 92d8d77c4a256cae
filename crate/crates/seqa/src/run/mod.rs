//! Run orchestration: configuration loading, backend assembly, command
//! implementations, and the run manifest that makes results auditable and
//! replayable.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::BackendError;
use crate::datasets::{load_dataset, write_canonical, Dataset, DatasetError, Example};
use crate::harness::analysis::{
    default_delta_grid, length_bucket_report, weight_cdf, DEFAULT_LENGTH_BINS,
};
use crate::harness::attack::{
    attack_metrics, load_pos_tags, load_synonyms, load_word_vectors, run_attack, AttackResources,
};
use crate::harness::consistency::{consistency_test, ConsistencyOptions, FileParaphrases};
use crate::harness::{evaluate_accuracy, HarnessError};
use crate::scorer::ScoreError;
use crate::voting::VotingError;

pub use config::{build_backends, build_scorer, BuiltBackends, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration:\n  - {}", .problems.join("\n  - "))]
    InvalidConfig { problems: Vec<String> },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Voting(#[from] VotingError),
    #[error("cannot merge run manifests: {detail}")]
    ManifestMismatch { detail: String },
    #[error("unknown ablation axis {axis:?} (expected temperature, sample_size, weight_fn, or backend_grid)")]
    UnknownAxis { axis: String },
    #[error("bad ablation value {value:?} for axis {axis}: {detail}")]
    BadAxisValue { axis: String, value: String, detail: String },
}

/// Everything needed to audit a run and to replay it bit-identically over
/// cached backend outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub created_at: String,
    pub scorer: String,
    pub dataset: String,
    /// Checksum of the loaded dataset in canonical form (covers label
    /// files and filtering, not just raw bytes).
    pub dataset_sha256: String,
    pub example_count: usize,
    /// backend role → fingerprint key.
    pub fingerprints: BTreeMap<String, String>,
    pub config: RunConfig,
    pub metrics: serde_json::Value,
    /// Primary results file (relative to the run directory) and its hash;
    /// warm-cache replays must reproduce this hash exactly.
    pub results_file: String,
    pub results_sha256: String,
}

impl RunManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    /// Written once, atomically, at run end.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, RunError> {
        let path = dir.join(Self::FILE_NAME);
        let bytes = serde_json::to_vec_pretty(self)?;
        let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|source| RunError::Write {
            path: path.display().to_string(),
            source,
        })?;
        fs::write(tmp.path(), &bytes).map_err(|source| RunError::Write {
            path: path.display().to_string(),
            source,
        })?;
        tmp.persist(&path).map_err(|e| RunError::Write {
            path: path.display().to_string(),
            source: e.error,
        })?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join(Self::FILE_NAME);
        let text = fs::read_to_string(&path).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn dataset_name(config: &RunConfig) -> Result<Dataset, RunError> {
    config.dataset.name.parse::<Dataset>().map_err(|e| RunError::InvalidConfig {
        problems: vec![e.to_string()],
    })
}

fn load_examples(config: &RunConfig) -> Result<(Vec<Example>, String), RunError> {
    let dataset = dataset_name(config)?;
    let examples = load_dataset(dataset, &config.dataset.path)?;
    let mut canonical = Vec::new();
    write_canonical(&mut canonical, &examples).expect("vec write cannot fail");
    let checksum = sha256_hex(&canonical);
    Ok((examples, checksum))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(|source| RunError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Serialize records as JSON lines, returning the file's checksum.
fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<String, RunError> {
    let mut bytes = Vec::new();
    for record in records {
        serde_json::to_writer(&mut bytes, record)?;
        bytes.push(b'\n');
    }
    write_bytes(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

fn ensure_out_dir(config: &RunConfig) -> Result<PathBuf, RunError> {
    let dir = config.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|source| RunError::Write {
        path: dir.display().to_string(),
        source,
    })?;
    Ok(dir)
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339()
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const WEIGHT_CDF_FILE: &str = "weight_cdf.tsv";
pub const ATTACK_RECORDS_FILE: &str = "attack_records.jsonl";
pub const CONSISTENCY_RECORDS_FILE: &str = "consistency_records.jsonl";
pub const SWEEP_FILE: &str = "sweep.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";

pub fn cmd_evaluate(config: &RunConfig) -> Result<RunManifest, RunError> {
    config.validate()?;
    let (examples, dataset_sha256) = load_examples(config)?;
    let backends = build_backends(config)?;
    let scorer = build_scorer(config, &backends)?;
    let report = evaluate_accuracy(scorer.as_ref(), &examples)?;

    let out_dir = ensure_out_dir(config)?;
    let results_sha256 = write_jsonl(&out_dir.join(VERDICTS_FILE), &report.verdicts)?;
    let lengths = length_bucket_report(&report.verdicts, &DEFAULT_LENGTH_BINS)?;

    let mut metrics = serde_json::json!({
        "accuracy": report.accuracy,
        "evaluated": report.evaluated(),
        "correct": report.correct(),
        "failures": report.failures.len(),
        "fallback_rate": report.fallback_rate(),
        "length_buckets": lengths,
    });

    // voter weight-gap curves, when the scorer retained its weight matrices
    if report.verdicts.iter().any(|v| {
        v.semantic.as_ref().and_then(|s| s.weights.as_ref()).is_some()
    }) {
        let cdf = weight_cdf(&report.verdicts, &default_delta_grid(100))?;
        let mut tsv = String::from("delta\tfavor_correct_pct\tfavor_wrong_pct\tfavor_neither_pct\n");
        let neither = cdf.favor_neither_pct();
        for (i, delta) in cdf.deltas.iter().enumerate() {
            tsv.push_str(&format!(
                "{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                delta, cdf.favor_correct_pct[i], cdf.favor_wrong_pct[i], neither[i]
            ));
        }
        write_bytes(&out_dir.join(WEIGHT_CDF_FILE), tsv.as_bytes())?;
        metrics["weight_cdf"] = serde_json::json!({
            "file": WEIGHT_CDF_FILE,
            "instances": cdf.instances,
            "restricted_multiway": cdf.restricted_multiway,
            "between_curve_area": cdf.between_curve_area(),
        });
    }

    let manifest = RunManifest {
        command: "evaluate".into(),
        created_at: timestamp(),
        scorer: config.scorer.name().into(),
        dataset: config.dataset.name.clone(),
        dataset_sha256,
        example_count: examples.len(),
        fingerprints: backends.fingerprints(),
        config: config.clone(),
        metrics,
        results_file: VERDICTS_FILE.into(),
        results_sha256,
    };
    manifest.write(&out_dir)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

fn load_attack_resources(config: &RunConfig) -> Result<AttackResources, RunError> {
    let mut resources = AttackResources::new(load_synonyms(&config.attack.synonyms)?)
        .with_max_candidates(config.attack.max_candidates)
        .with_min_similarity(config.attack.min_similarity);
    if let Some(path) = &config.attack.pos_tags {
        resources = resources.with_pos_tags(load_pos_tags(path)?);
    }
    if let Some(path) = &config.attack.word_vectors {
        resources = resources.with_word_vectors(load_word_vectors(path)?);
    }
    resources.validate()?;
    Ok(resources)
}

pub fn cmd_attack(config: &RunConfig) -> Result<RunManifest, RunError> {
    config.validate()?;
    config.validate_attack()?;
    let (examples, dataset_sha256) = load_examples(config)?;
    let backends = build_backends(config)?;
    let scorer = build_scorer(config, &backends)?;
    let encoder = backends.encoder.clone().ok_or_else(|| RunError::InvalidConfig {
        problems: vec!["attack needs [backends.encoder]".into()],
    })?;
    let resources = load_attack_resources(config)?;

    let original = evaluate_accuracy(scorer.as_ref(), &examples)?;
    let (records, summary) = run_attack(
        scorer.as_ref(),
        encoder.as_ref(),
        &examples,
        &resources,
        config.attack.query_budget,
    )?;
    let metrics_table = attack_metrics(&records, original.accuracy)?;

    let out_dir = ensure_out_dir(config)?;
    let results_sha256 = write_jsonl(&out_dir.join(ATTACK_RECORDS_FILE), &records)?;
    let metrics = serde_json::json!({
        "original_accuracy": metrics_table.original_accuracy,
        "after_attack_accuracy": metrics_table.after_attack_accuracy,
        "attack_success_rate": metrics_table.attack_success_rate,
        "attacked": metrics_table.attacked,
        "successes": metrics_table.successes,
        "mean_perturbed_pct": metrics_table.mean_perturbed_pct,
        "mean_similarity": metrics_table.mean_similarity,
        "skipped_incorrect": summary.skipped_incorrect,
        "total_queries": summary.total_queries,
    });

    let manifest = RunManifest {
        command: "attack".into(),
        created_at: timestamp(),
        scorer: config.scorer.name().into(),
        dataset: config.dataset.name.clone(),
        dataset_sha256,
        example_count: examples.len(),
        fingerprints: backends.fingerprints(),
        config: config.clone(),
        metrics,
        results_file: ATTACK_RECORDS_FILE.into(),
        results_sha256,
    };
    manifest.write(&out_dir)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// consistency
// ---------------------------------------------------------------------------

pub fn cmd_consistency(config: &RunConfig) -> Result<RunManifest, RunError> {
    config.validate()?;
    config.validate_consistency()?;
    let (examples, dataset_sha256) = load_examples(config)?;
    let backends = build_backends(config)?;
    let scorer = build_scorer(config, &backends)?;
    let provider = FileParaphrases::load(&config.consistency.paraphrases)?;
    let options = ConsistencyOptions {
        distractors: config.consistency.distractors,
        paraphrases_per_choice: config.consistency.paraphrases_per_choice,
        sample_n: config.consistency.sample_n,
        seed: config.generation.seed,
    };
    let report = consistency_test(scorer.as_ref(), &examples, &provider, &options)?;

    let out_dir = ensure_out_dir(config)?;
    let results_sha256 = write_jsonl(&out_dir.join(CONSISTENCY_RECORDS_FILE), &report.records)?;
    let metrics = serde_json::json!({
        "mean_rank_std": report.mean_rank_std,
        "records": report.records.len(),
        "skipped": report.skipped.len(),
        "distractors": options.distractors,
        "paraphrases_per_choice": options.paraphrases_per_choice,
    });

    let manifest = RunManifest {
        command: "consistency".into(),
        created_at: timestamp(),
        scorer: config.scorer.name().into(),
        dataset: config.dataset.name.clone(),
        dataset_sha256,
        example_count: examples.len(),
        fingerprints: backends.fingerprints(),
        config: config.clone(),
        metrics,
        results_file: CONSISTENCY_RECORDS_FILE.into(),
        results_sha256,
    };
    manifest.write(&out_dir)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Temperature,
    SampleSize,
    WeightFn,
    BackendGrid,
}

impl AblationAxis {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Temperature => "temperature",
            Self::SampleSize => "sample_size",
            Self::WeightFn => "weight_fn",
            Self::BackendGrid => "backend_grid",
        }
    }
}

impl std::str::FromStr for AblationAxis {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().replace('-', "_").as_str() {
            "temperature" => Ok(Self::Temperature),
            "sample_size" => Ok(Self::SampleSize),
            "weight_fn" => Ok(Self::WeightFn),
            "backend_grid" => Ok(Self::BackendGrid),
            other => Err(RunError::UnknownAxis { axis: other.to_string() }),
        }
    }
}

fn default_axis_values(axis: AblationAxis, config: &RunConfig) -> Vec<String> {
    match axis {
        AblationAxis::Temperature => {
            ["10", "1", "0.2", "0.1", "0.05"].iter().map(|s| s.to_string()).collect()
        }
        AblationAxis::SampleSize => {
            ["10", "50", "100", "200", "500"].iter().map(|s| s.to_string()).collect()
        }
        AblationAxis::WeightFn => ["exp:0.1", "indicator:0.5", "relu:0.5", "sigmoid:0.1"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        AblationAxis::BackendGrid => config.grid.iter().map(|c| c.name.clone()).collect(),
    }
}

fn config_for_value(
    axis: AblationAxis,
    value: &str,
    config: &RunConfig,
) -> Result<RunConfig, RunError> {
    let bad = |detail: String| RunError::BadAxisValue {
        axis: axis.name().into(),
        value: value.to_string(),
        detail,
    };
    let mut derived = config.clone();
    match axis {
        AblationAxis::Temperature => {
            if !matches!(config.voting.weight_fn.as_str(), "exp" | "sigmoid") {
                return Err(bad(format!(
                    "weight function {:?} has no temperature",
                    config.voting.weight_fn
                )));
            }
            derived.voting.weight_param =
                value.parse::<f64>().map_err(|e| bad(e.to_string()))?;
        }
        AblationAxis::SampleSize => {
            derived.generation.sample_count =
                value.parse::<usize>().map_err(|e| bad(e.to_string()))?;
        }
        AblationAxis::WeightFn => {
            let (kind, param) = match value.split_once(':') {
                Some((kind, param)) => {
                    (kind.to_string(), param.parse::<f64>().map_err(|e| bad(e.to_string()))?)
                }
                None => (value.to_string(), config.voting.weight_param),
            };
            derived.voting.weight_fn = kind;
            derived.voting.weight_param = param;
        }
        AblationAxis::BackendGrid => {
            let cell = config
                .grid
                .iter()
                .find(|c| c.name == value)
                .ok_or_else(|| bad("no [[grid]] cell with that name".to_string()))?;
            derived = config.with_grid_cell(cell);
        }
    }
    Ok(derived)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub accuracy: f64,
    pub evaluated: usize,
    pub failures: usize,
}

/// One evaluation per axis value, all sharing the run's backend cache so
/// e.g. sample-size sweeps reuse prefixes of the largest sample list.
pub fn cmd_ablate(
    config: &RunConfig,
    axis: AblationAxis,
    values: Option<Vec<String>>,
) -> Result<RunManifest, RunError> {
    config.validate()?;
    let values = match values {
        Some(v) if !v.is_empty() => v,
        _ => default_axis_values(axis, config),
    };
    if values.is_empty() {
        return Err(RunError::InvalidConfig {
            problems: vec![format!("axis {} has no values to sweep", axis.name())],
        });
    }
    // derive and validate every cell before touching any backend
    let mut derived = Vec::with_capacity(values.len());
    for value in &values {
        let cell_config = config_for_value(axis, value, config)?;
        cell_config.validate()?;
        derived.push((value.clone(), cell_config));
    }

    let (examples, dataset_sha256) = load_examples(config)?;
    let mut rows = Vec::with_capacity(derived.len());
    let mut fingerprints = BTreeMap::new();
    for (value, cell_config) in &derived {
        let backends = build_backends(cell_config)?;
        let scorer = build_scorer(cell_config, &backends)?;
        let report = evaluate_accuracy(scorer.as_ref(), &examples)?;
        for (role, fp) in backends.fingerprints() {
            fingerprints.insert(format!("{value}/{role}"), fp);
        }
        rows.push(SweepRow {
            axis: axis.name().into(),
            value: value.clone(),
            accuracy: report.accuracy,
            evaluated: report.evaluated(),
            failures: report.failures.len(),
        });
    }

    let out_dir = ensure_out_dir(config)?;
    let mut tsv = String::from("axis\tvalue\taccuracy\tevaluated\tfailures\n");
    for row in &rows {
        tsv.push_str(&format!(
            "{}\t{}\t{:.6}\t{}\t{}\n",
            row.axis, row.value, row.accuracy, row.evaluated, row.failures
        ));
    }
    write_bytes(&out_dir.join(SWEEP_FILE), tsv.as_bytes())?;
    let results_sha256 = sha256_hex(tsv.as_bytes());

    let manifest = RunManifest {
        command: "ablate".into(),
        created_at: timestamp(),
        scorer: config.scorer.name().into(),
        dataset: config.dataset.name.clone(),
        dataset_sha256,
        example_count: examples.len(),
        fingerprints,
        config: config.clone(),
        metrics: serde_json::json!({ "axis": axis.name(), "rows": rows }),
        results_file: SWEEP_FILE.into(),
        results_sha256,
    };
    manifest.write(&out_dir)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn metric_cell(metrics: &serde_json::Value, key: &str) -> String {
    match metrics.get(key) {
        Some(serde_json::Value::Number(n)) => {
            n.as_f64().map(|v| format!("{v:.6}")).unwrap_or_else(|| n.to_string())
        }
        _ => String::new(),
    }
}

/// Merge manifests from several run directories over the same dataset into
/// one summary table, and collect each run's curve files alongside it.
pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<PathBuf, RunError> {
    if run_dirs.is_empty() {
        return Err(RunError::InvalidConfig { problems: vec!["no run directories given".into()] });
    }
    let mut manifests = Vec::with_capacity(run_dirs.len());
    for dir in run_dirs {
        manifests.push((dir.clone(), RunManifest::load(dir)?));
    }
    let (_, first) = &manifests[0];
    for (dir, manifest) in &manifests[1..] {
        if manifest.dataset != first.dataset || manifest.dataset_sha256 != first.dataset_sha256 {
            return Err(RunError::ManifestMismatch {
                detail: format!(
                    "{} evaluated {} ({}) but {} evaluated {} ({})",
                    manifests[0].0.display(),
                    first.dataset,
                    &first.dataset_sha256[..12],
                    dir.display(),
                    manifest.dataset,
                    &manifest.dataset_sha256[..12],
                ),
            });
        }
    }

    fs::create_dir_all(out_dir).map_err(|source| RunError::Write {
        path: out_dir.display().to_string(),
        source,
    })?;

    let run_name = |dir: &Path| {
        dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| {
            dir.display().to_string()
        })
    };
    let mut rows: Vec<(String, &RunManifest)> =
        manifests.iter().map(|(dir, m)| (run_name(dir), m)).collect();
    rows.sort_by(|a, b| {
        (a.1.command.as_str(), a.1.scorer.as_str(), a.0.as_str())
            .cmp(&(b.1.command.as_str(), b.1.scorer.as_str(), b.0.as_str()))
    });

    let mut tsv = String::from(
        "run\tcommand\tscorer\tdataset\taccuracy\tafter_attack_accuracy\tattack_success_rate\tmean_rank_std\n",
    );
    for (name, manifest) in &rows {
        let accuracy = if manifest.command == "attack" {
            metric_cell(&manifest.metrics, "original_accuracy")
        } else {
            metric_cell(&manifest.metrics, "accuracy")
        };
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            name,
            manifest.command,
            manifest.scorer,
            manifest.dataset,
            accuracy,
            metric_cell(&manifest.metrics, "after_attack_accuracy"),
            metric_cell(&manifest.metrics, "attack_success_rate"),
            metric_cell(&manifest.metrics, "mean_rank_std"),
        ));
    }
    let summary_path = out_dir.join(SUMMARY_FILE);
    write_bytes(&summary_path, tsv.as_bytes())?;

    // curve data travels with the summary
    for (dir, _) in &manifests {
        for curve in [WEIGHT_CDF_FILE, SWEEP_FILE] {
            let src = dir.join(curve);
            if src.is_file() {
                let dst = out_dir.join(format!("{}-{curve}", run_name(dir)));
                fs::copy(&src, &dst).map_err(|source| RunError::Write {
                    path: dst.display().to_string(),
                    source,
                })?;
            }
        }
    }
    Ok(summary_path)
}
