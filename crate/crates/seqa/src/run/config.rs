//! Declarative run configuration: one TOML file describes the dataset,
//! the scoring method, its backends, and every knob a run needs. Flags
//! override individual fields; validation lists every problem at once,
//! before any backend is contacted.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::backends::cache::{
    CachedCausalScorer, CachedEncoder, CachedGenerator, CachedMaskedScorer, DiskCache,
};
use crate::backends::remote::RemoteBackend;
use crate::backends::stub::{
    ConstantMaskScorer, CyclingGenerator, HashingEncoder, PositionMaskScorer, SeededPoolGenerator,
    UniformScorer, WordTableScorer,
};
use crate::backends::{
    CausalGenerator, CausalScorer, GenerationParams, MaskedScorer, SentenceEncoder,
};
use crate::scorer::{
    ChoiceScorer, MiQaScorer, ProAScorer, ProQScorer, ScorerKind, SeqaScorer,
};
use crate::voting::WeightFunction;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VotingConfig {
    /// Weight function kind: exp, indicator, relu, or sigmoid.
    pub weight_fn: String,
    /// Its parameter: temperature for exp/sigmoid, threshold otherwise.
    pub weight_param: f64,
    /// Retain per-voter weight matrices for the vote-distribution curves.
    pub keep_weights: bool,
}

impl Default for VotingConfig {
    fn default() -> Self {
        Self { weight_fn: "exp".into(), weight_param: 0.1, keep_weights: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Voters sampled per question (K).
    pub sample_count: usize,
    pub nucleus_p: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let p = GenerationParams::default();
        Self {
            sample_count: p.sample_count,
            nucleus_p: p.nucleus_p,
            max_new_tokens: p.max_new_tokens,
            seed: p.seed,
        }
    }
}

impl GenerationConfig {
    pub fn params(&self) -> GenerationParams {
        GenerationParams {
            nucleus_p: self.nucleus_p,
            max_new_tokens: self.max_new_tokens,
            sample_count: self.sample_count,
            seed: self.seed,
        }
    }
}

// ---------------------------------------------------------------------------
// Backend specifications
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Remote { url: String },
    StubCycling { name: String, sentences: Vec<String> },
    StubPool { name: String, pool: Vec<String>, words_per_sample: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EncoderSpec {
    Remote {
        url: String,
    },
    StubHash {
        name: String,
        dim: usize,
        #[serde(default)]
        stopwords: Vec<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CausalScorerSpec {
    Remote {
        url: String,
    },
    StubUniform {
        name: String,
        vocab_size: usize,
    },
    StubWordTable {
        name: String,
        default_prob: f64,
        #[serde(default)]
        words: HashMap<String, f64>,
        #[serde(default)]
        position_decay: f64,
        #[serde(default)]
        unconditional_penalty: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaskedScorerSpec {
    Remote { url: String },
    StubConstant { name: String, prob: f64 },
    StubPosition { name: String, step: f64 },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendsConfig {
    pub generator: Option<GeneratorSpec>,
    pub encoder: Option<EncoderSpec>,
    pub causal_scorer: Option<CausalScorerSpec>,
    pub masked_scorer: Option<MaskedScorerSpec>,
}

/// One cell of a backend-grid ablation: named overrides applied on top of
/// the run's `[backends]` table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub name: String,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub encoder: Option<EncoderSpec>,
    #[serde(default)]
    pub causal_scorer: Option<CausalScorerSpec>,
    #[serde(default)]
    pub masked_scorer: Option<MaskedScorerSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Synonym lexicon file: `word substitute [substitute ...]` per line.
    pub synonyms: PathBuf,
    /// Part-of-speech table: `word TAG` per line.
    pub pos_tags: Option<PathBuf>,
    /// Word-vector table: `word v1 v2 ...` per line.
    pub word_vectors: Option<PathBuf>,
    pub max_candidates: usize,
    pub min_similarity: f64,
    /// Scorer queries allowed per attacked example.
    pub query_budget: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            synonyms: PathBuf::new(),
            pos_tags: None,
            word_vectors: None,
            max_candidates: 50,
            min_similarity: 0.84,
            query_budget: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyConfig {
    /// Paraphrase file: JSON lines of `{"text", "paraphrases"}`.
    pub paraphrases: PathBuf,
    pub distractors: usize,
    pub paraphrases_per_choice: usize,
    pub sample_n: usize,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            paraphrases: PathBuf::new(),
            distractors: 19,
            paraphrases_per_choice: 3,
            sample_n: 500,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Backend response cache root; the `SEQA_CACHE_DIR` environment
    /// variable applies when unset.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub scorer: ScorerKind,
    pub voting: VotingConfig,
    pub generation: GenerationConfig,
    pub backends: BackendsConfig,
    pub attack: AttackConfig,
    pub consistency: ConsistencyConfig,
    pub output: OutputConfig,
    /// Named backend combinations for grid ablations.
    pub grid: Vec<GridCell>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig { name: String::new(), path: PathBuf::new() },
            scorer: ScorerKind::Seqa,
            voting: VotingConfig::default(),
            generation: GenerationConfig::default(),
            backends: BackendsConfig::default(),
            attack: AttackConfig::default(),
            consistency: ConsistencyConfig::default(),
            output: OutputConfig::default(),
            grid: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(toml::from_str(&text)?)
    }

    pub fn weight_function(&self) -> Result<WeightFunction, RunError> {
        Ok(WeightFunction::from_kind(&self.voting.weight_fn, self.voting.weight_param)?)
    }

    /// Every configuration problem at once, before any backend call.
    pub fn validate(&self) -> Result<(), RunError> {
        let mut problems = Vec::new();
        if self.dataset.name.parse::<crate::datasets::Dataset>().is_err() {
            problems.push(format!("dataset.name {:?} is not a known dataset", self.dataset.name));
        }
        if !self.dataset.path.is_file() {
            problems.push(format!("dataset.path {:?} is not a readable file", self.dataset.path));
        }
        if self.generation.sample_count == 0 {
            problems.push("generation.sample_count must be ≥ 1".into());
        }
        if !(self.generation.nucleus_p > 0.0 && self.generation.nucleus_p <= 1.0) {
            problems.push(format!(
                "generation.nucleus_p {} outside (0, 1]",
                self.generation.nucleus_p
            ));
        }
        if self.generation.max_new_tokens == 0 {
            problems.push("generation.max_new_tokens must be ≥ 1".into());
        }
        if let Err(e) = WeightFunction::from_kind(&self.voting.weight_fn, self.voting.weight_param)
        {
            problems.push(format!("voting: {e}"));
        }
        match self.scorer {
            ScorerKind::Seqa => {
                if self.backends.generator.is_none() {
                    problems.push("scorer seqa needs [backends.generator]".into());
                }
                if self.backends.encoder.is_none() {
                    problems.push("scorer seqa needs [backends.encoder]".into());
                }
            }
            ScorerKind::ProA | ScorerKind::MiQa => {
                if self.backends.causal_scorer.is_none() {
                    problems.push(format!(
                        "scorer {} needs [backends.causal_scorer]",
                        self.scorer
                    ));
                }
            }
            ScorerKind::ProQ => {
                if self.backends.masked_scorer.is_none() {
                    problems.push("scorer pro_q needs [backends.masked_scorer]".into());
                }
            }
        }
        if self.output.dir.as_os_str().is_empty() {
            problems.push("output.dir must be set".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RunError::InvalidConfig { problems })
        }
    }

    /// Extra checks for the attack command.
    pub fn validate_attack(&self) -> Result<(), RunError> {
        let mut problems = Vec::new();
        if self.attack.synonyms.as_os_str().is_empty() || !self.attack.synonyms.is_file() {
            problems.push(format!(
                "attack.synonyms {:?} is not a readable file",
                self.attack.synonyms
            ));
        }
        for (label, path) in [
            ("attack.pos_tags", &self.attack.pos_tags),
            ("attack.word_vectors", &self.attack.word_vectors),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    problems.push(format!("{label} {p:?} is not a readable file"));
                }
            }
        }
        if self.backends.encoder.is_none() {
            problems.push("attack needs [backends.encoder] for similarity filtering".into());
        }
        if self.attack.query_budget == 0 {
            problems.push("attack.query_budget must be ≥ 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RunError::InvalidConfig { problems })
        }
    }

    /// Extra checks for the consistency command.
    pub fn validate_consistency(&self) -> Result<(), RunError> {
        let mut problems = Vec::new();
        if self.consistency.paraphrases.as_os_str().is_empty()
            || !self.consistency.paraphrases.is_file()
        {
            problems.push(format!(
                "consistency.paraphrases {:?} is not a readable file",
                self.consistency.paraphrases
            ));
        }
        if self.consistency.paraphrases_per_choice == 0 {
            problems.push("consistency.paraphrases_per_choice must be ≥ 1".into());
        }
        if self.consistency.sample_n == 0 {
            problems.push("consistency.sample_n must be ≥ 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RunError::InvalidConfig { problems })
        }
    }

    /// Apply one grid cell's backend overrides.
    pub fn with_grid_cell(&self, cell: &GridCell) -> Self {
        let mut out = self.clone();
        if let Some(g) = &cell.generator {
            out.backends.generator = Some(g.clone());
        }
        if let Some(e) = &cell.encoder {
            out.backends.encoder = Some(e.clone());
        }
        if let Some(c) = &cell.causal_scorer {
            out.backends.causal_scorer = Some(c.clone());
        }
        if let Some(m) = &cell.masked_scorer {
            out.backends.masked_scorer = Some(m.clone());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Backend construction
// ---------------------------------------------------------------------------

/// The backends a run actually built, each optionally cache-wrapped.
#[derive(Default)]
pub struct BuiltBackends {
    pub generator: Option<Arc<dyn CausalGenerator>>,
    pub encoder: Option<Arc<dyn SentenceEncoder>>,
    pub causal_scorer: Option<Arc<dyn CausalScorer>>,
    pub masked_scorer: Option<Arc<dyn MaskedScorer>>,
}

impl BuiltBackends {
    /// role → fingerprint key, for the run manifest.
    pub fn fingerprints(&self) -> std::collections::BTreeMap<String, String> {
        let mut map = std::collections::BTreeMap::new();
        if let Some(g) = &self.generator {
            map.insert("generator".into(), g.fingerprint().key());
        }
        if let Some(e) = &self.encoder {
            map.insert("encoder".into(), e.fingerprint().key());
        }
        if let Some(c) = &self.causal_scorer {
            map.insert("causal_scorer".into(), c.fingerprint().key());
        }
        if let Some(m) = &self.masked_scorer {
            map.insert("masked_scorer".into(), m.fingerprint().key());
        }
        map
    }
}

pub fn build_backends(config: &RunConfig) -> Result<BuiltBackends, RunError> {
    let cache = DiskCache::resolve(config.output.cache_dir.as_deref())?;
    let mut built = BuiltBackends::default();

    if let Some(spec) = &config.backends.generator {
        let inner: Arc<dyn CausalGenerator> = match spec {
            GeneratorSpec::Remote { url } => Arc::new(RemoteBackend::connect(url)?),
            GeneratorSpec::StubCycling { name, sentences } => {
                Arc::new(CyclingGenerator::new(name, sentences.clone()))
            }
            GeneratorSpec::StubPool { name, pool, words_per_sample } => {
                Arc::new(SeededPoolGenerator::new(name, pool.clone(), *words_per_sample))
            }
        };
        built.generator = Some(match &cache {
            Some(c) => Arc::new(CachedGenerator::new(inner, c.clone())),
            None => inner,
        });
    }

    if let Some(spec) = &config.backends.encoder {
        let inner: Arc<dyn SentenceEncoder> = match spec {
            EncoderSpec::Remote { url } => Arc::new(RemoteBackend::connect(url)?),
            EncoderSpec::StubHash { name, dim, stopwords } => {
                Arc::new(HashingEncoder::new(name, *dim).with_stopwords(stopwords.clone()))
            }
        };
        built.encoder = Some(match &cache {
            Some(c) => Arc::new(CachedEncoder::new(inner, c.clone())),
            None => inner,
        });
    }

    if let Some(spec) = &config.backends.causal_scorer {
        let inner: Arc<dyn CausalScorer> = match spec {
            CausalScorerSpec::Remote { url } => Arc::new(RemoteBackend::connect(url)?),
            CausalScorerSpec::StubUniform { name, vocab_size } => {
                Arc::new(UniformScorer::new(name, *vocab_size))
            }
            CausalScorerSpec::StubWordTable {
                name,
                default_prob,
                words,
                position_decay,
                unconditional_penalty,
            } => {
                let mut scorer = WordTableScorer::new(name, *default_prob);
                let mut ordered: Vec<(&String, &f64)> = words.iter().collect();
                ordered.sort_by(|a, b| a.0.cmp(b.0));
                for (word, prob) in ordered {
                    scorer = scorer.with_word(word.clone(), *prob);
                }
                if *position_decay > 0.0 {
                    scorer = scorer.with_position_decay(*position_decay);
                }
                if *unconditional_penalty > 0.0 {
                    scorer = scorer.with_unconditional_penalty(*unconditional_penalty);
                }
                Arc::new(scorer)
            }
        };
        built.causal_scorer = Some(match &cache {
            Some(c) => Arc::new(CachedCausalScorer::new(inner, c.clone())),
            None => inner,
        });
    }

    if let Some(spec) = &config.backends.masked_scorer {
        let inner: Arc<dyn MaskedScorer> = match spec {
            MaskedScorerSpec::Remote { url } => Arc::new(RemoteBackend::connect(url)?),
            MaskedScorerSpec::StubConstant { name, prob } => {
                Arc::new(ConstantMaskScorer::new(name, *prob))
            }
            MaskedScorerSpec::StubPosition { name, step } => {
                Arc::new(PositionMaskScorer::new(name, *step))
            }
        };
        built.masked_scorer = Some(match &cache {
            Some(c) => Arc::new(CachedMaskedScorer::new(inner, c.clone())),
            None => inner,
        });
    }

    Ok(built)
}

/// Assemble the configured scoring method from its backends.
pub fn build_scorer(
    config: &RunConfig,
    backends: &BuiltBackends,
) -> Result<Arc<dyn ChoiceScorer>, RunError> {
    let missing = |what: &str| RunError::InvalidConfig {
        problems: vec![format!("scorer {} needs {what}", config.scorer)],
    };
    Ok(match config.scorer {
        ScorerKind::Seqa => {
            let generator =
                backends.generator.clone().ok_or_else(|| missing("[backends.generator]"))?;
            let encoder = backends.encoder.clone().ok_or_else(|| missing("[backends.encoder]"))?;
            Arc::new(
                SeqaScorer::new(
                    generator,
                    encoder,
                    config.weight_function()?,
                    config.generation.params(),
                )
                .keep_weights(config.voting.keep_weights),
            )
        }
        ScorerKind::ProA => Arc::new(ProAScorer::new(
            backends.causal_scorer.clone().ok_or_else(|| missing("[backends.causal_scorer]"))?,
        )),
        ScorerKind::ProQ => Arc::new(ProQScorer::new(
            backends.masked_scorer.clone().ok_or_else(|| missing("[backends.masked_scorer]"))?,
        )),
        ScorerKind::MiQa => Arc::new(MiQaScorer::new(
            backends.causal_scorer.clone().ok_or_else(|| missing("[backends.causal_scorer]"))?,
        )),
    })
}
