//! Uniform choice-scoring interface over the semantic-voting method and the
//! LM-score baselines.
//!
//! The evaluation harness treats every method as a black box that maps an
//! example to per-choice scores plus an argmax; this module provides that
//! box. Each question derives its own generation seed from (run seed,
//! question id), so voter sets are independent of dataset order and safe to
//! compute concurrently.

use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{
    generate_voters, BackendError, CausalGenerator, CausalScorer, GenerationParams, MaskedScorer,
    SentenceEncoder,
};
use crate::baselines::{mi_qa_score, pro_a_score, pro_q_score};
use crate::datasets::templates::{continuation_text, rewrite_question};
use crate::datasets::{DatasetError, Example};
use crate::voting::{
    rank_choices, score_choices, SemanticVerdict, VoterSet, VotingError, WeightFunction,
};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("example {id} has {found} choices; scoring needs at least 2")]
    TooFewChoices { id: String, found: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Voting(#[from] VotingError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Per-choice scores with the selected index. `semantic` is present only
/// for the voting method and carries the per-voter weight matrix when the
/// scorer was built to retain it.
#[derive(Debug, Clone)]
pub struct ChoiceScores {
    pub scores: Vec<f64>,
    pub chosen: usize,
    pub semantic: Option<SemanticVerdict>,
    pub fallback_used: bool,
}

/// A scoring method the harness can evaluate, attack, and consistency-test.
pub trait ChoiceScorer: Send + Sync {
    fn name(&self) -> &str;

    fn score_example(&self, example: &Example) -> Result<ChoiceScores, ScoreError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Seqa,
    ProA,
    ProQ,
    MiQa,
}

impl ScorerKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Seqa => "seqa",
            Self::ProA => "pro_a",
            Self::ProQ => "pro_q",
            Self::MiQa => "mi_qa",
        }
    }
}

impl std::fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScorerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().replace('-', "_").as_str() {
            "seqa" => Ok(Self::Seqa),
            "pro_a" | "proa" => Ok(Self::ProA),
            "pro_q" | "proq" => Ok(Self::ProQ),
            "mi_qa" | "miqa" => Ok(Self::MiQa),
            other => Err(format!(
                "unknown scorer {other:?} (expected seqa, pro_a, pro_q, or mi_qa)"
            )),
        }
    }
}

fn require_multiple_choices(example: &Example) -> Result<(), ScoreError> {
    if example.choices.len() < 2 {
        return Err(ScoreError::TooFewChoices {
            id: example.id.clone(),
            found: example.choices.len(),
        });
    }
    Ok(())
}

/// Derive the generation seed for one question: a stable hash of the run
/// seed and the question id, so each question has its own sample stream
/// regardless of dataset order or worker scheduling.
pub fn question_seed(run_seed: u64, question_id: &str) -> u64 {
    let digest = Sha256::digest(format!("{run_seed}|{question_id}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

// ---------------------------------------------------------------------------
// Semantic voting
// ---------------------------------------------------------------------------

pub struct SeqaScorer {
    generator: Arc<dyn CausalGenerator>,
    encoder: Arc<dyn SentenceEncoder>,
    weight_fn: WeightFunction,
    params: GenerationParams,
    keep_weights: bool,
}

impl SeqaScorer {
    pub fn new(
        generator: Arc<dyn CausalGenerator>,
        encoder: Arc<dyn SentenceEncoder>,
        weight_fn: WeightFunction,
        params: GenerationParams,
    ) -> Self {
        Self { generator, encoder, weight_fn, params, keep_weights: false }
    }

    /// Retain the per-voter weight matrix in every verdict (needed for the
    /// vote-distribution analysis; does not change any score).
    pub fn keep_weights(mut self, keep: bool) -> Self {
        self.keep_weights = keep;
        self
    }

    /// Sample and embed this example's voters.
    pub fn voters_for(&self, example: &Example) -> Result<VoterSet, ScoreError> {
        let rewritten = rewrite_question(example);
        let params = GenerationParams {
            seed: question_seed(self.params.seed, &example.id),
            ..self.params.clone()
        };
        let texts = generate_voters(&rewritten.prompt, &params, self.generator.as_ref())?;
        let features = crate::backends::embed(&texts, self.encoder.as_ref())?;
        Ok(VoterSet::new(
            texts,
            features,
            example.id.clone(),
            format!("{}|{}", self.generator.fingerprint(), params.stream_key()),
        )?)
    }
}

impl ChoiceScorer for SeqaScorer {
    fn name(&self) -> &str {
        "seqa"
    }

    fn score_example(&self, example: &Example) -> Result<ChoiceScores, ScoreError> {
        require_multiple_choices(example)?;
        let rewritten = rewrite_question(example);
        let voters = self.voters_for(example)?;
        let mut choice_features = Vec::with_capacity(example.choices.len());
        for j in 0..example.choices.len() {
            let surface = example.choice_surface(j)?;
            choice_features.push(self.encoder.encode(&surface)?);
        }
        let verdict = score_choices(&choice_features, &voters, &self.weight_fn, self.keep_weights)?;
        Ok(ChoiceScores {
            scores: verdict.scores.clone(),
            chosen: verdict.chosen,
            semantic: Some(verdict),
            fallback_used: rewritten.fallback_used,
        })
    }
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

fn baseline_scores<F>(example: &Example, mut score_one: F) -> Result<ChoiceScores, ScoreError>
where
    F: FnMut(&str) -> Result<f64, BackendError>,
{
    require_multiple_choices(example)?;
    let rewritten = rewrite_question(example);
    let mut scores = Vec::with_capacity(example.choices.len());
    for choice in &example.choices {
        scores.push(score_one(&continuation_text(&rewritten, choice))?);
    }
    let (chosen, _) = rank_choices(&scores)?;
    Ok(ChoiceScores { scores, chosen, semantic: None, fallback_used: rewritten.fallback_used })
}

pub struct ProAScorer {
    scorer: Arc<dyn CausalScorer>,
}

impl ProAScorer {
    pub fn new(scorer: Arc<dyn CausalScorer>) -> Self {
        Self { scorer }
    }
}

impl ChoiceScorer for ProAScorer {
    fn name(&self) -> &str {
        "pro_a"
    }

    fn score_example(&self, example: &Example) -> Result<ChoiceScores, ScoreError> {
        let prompt = rewrite_question(example).prompt;
        baseline_scores(example, |continuation| {
            pro_a_score(&prompt, continuation, self.scorer.as_ref())
        })
    }
}

pub struct ProQScorer {
    scorer: Arc<dyn MaskedScorer>,
}

impl ProQScorer {
    pub fn new(scorer: Arc<dyn MaskedScorer>) -> Self {
        Self { scorer }
    }
}

impl ChoiceScorer for ProQScorer {
    fn name(&self) -> &str {
        "pro_q"
    }

    fn score_example(&self, example: &Example) -> Result<ChoiceScores, ScoreError> {
        let prompt = rewrite_question(example).prompt;
        baseline_scores(example, |continuation| {
            pro_q_score(&prompt, continuation, self.scorer.as_ref())
        })
    }
}

pub struct MiQaScorer {
    scorer: Arc<dyn CausalScorer>,
}

impl MiQaScorer {
    pub fn new(scorer: Arc<dyn CausalScorer>) -> Self {
        Self { scorer }
    }
}

impl ChoiceScorer for MiQaScorer {
    fn name(&self) -> &str {
        "mi_qa"
    }

    fn score_example(&self, example: &Example) -> Result<ChoiceScores, ScoreError> {
        let prompt = rewrite_question(example).prompt;
        baseline_scores(example, |continuation| {
            mi_qa_score(&prompt, continuation, self.scorer.as_ref())
        })
    }
}
