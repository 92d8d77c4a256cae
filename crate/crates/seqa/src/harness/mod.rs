//! Evaluation harness: accuracy over a dataset, synonym-replacement
//! attacks, paraphrase-consistency testing, and post-hoc analyses.
//!
//! Everything here treats the scoring method as a black box behind the
//! [`ChoiceScorer`] trait, so the same machinery runs against the voting
//! method and every baseline.

pub mod analysis;
pub mod attack;
pub mod consistency;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::BackendError;
use crate::datasets::Example;
use crate::scorer::{ChoiceScorer, ScoreError};
use crate::voting::{SemanticVerdict, VotingError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no examples to evaluate")]
    NoExamples,
    #[error("scoring failed on all {failed} examples; accuracy is undefined")]
    NoUsableExamples { failed: usize },
    #[error("no examples were attacked; attack rates are undefined")]
    NothingAttacked,
    #[error("attack resources incomplete: {0}")]
    MissingResources(String),
    #[error("consistency test produced no records ({skipped} examples skipped)")]
    NoConsistencyRecords { skipped: usize },
    #[error("no verdicts carry voter weight matrices; rerun scoring with weights retained")]
    NoWeightMatrices,
    #[error("weight-gap grid must be nonempty, finite, and strictly increasing")]
    BadDeltaGrid,
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Voting(#[from] VotingError),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad record in {path}: {detail}")]
    BadResource { path: String, detail: String },
}

/// One scored example: what the method picked and what was right.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalVerdict {
    pub id: String,
    pub scores: Vec<f64>,
    pub chosen: usize,
    pub gold: usize,
    pub correct: bool,
    /// Whitespace word count of the gold choice, for length-bucket reports.
    pub gold_word_count: usize,
    pub fallback_used: bool,
    /// Voting details (weight matrix included only when the scorer kept it).
    /// Not persisted: the matrix is K×V per example.
    #[serde(skip)]
    pub semantic: Option<SemanticVerdict>,
}

/// An example the scorer could not score. Kept out of the accuracy
/// denominator but always surfaced in the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreFailure {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer: String,
    pub verdicts: Vec<EvalVerdict>,
    pub failures: Vec<ScoreFailure>,
    pub accuracy: f64,
}

impl EvalReport {
    pub fn evaluated(&self) -> usize {
        self.verdicts.len()
    }

    pub fn correct(&self) -> usize {
        self.verdicts.iter().filter(|v| v.correct).count()
    }

    pub fn fallback_rate(&self) -> f64 {
        if self.verdicts.is_empty() {
            return 0.0;
        }
        self.verdicts.iter().filter(|v| v.fallback_used).count() as f64
            / self.verdicts.len() as f64
    }
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Score every example and report the fraction the scorer got right.
///
/// A scorer failure on one example never silently counts as wrong: the
/// example is excluded from the denominator and listed in
/// [`EvalReport::failures`].
pub fn evaluate_accuracy(
    scorer: &dyn ChoiceScorer,
    examples: &[Example],
) -> Result<EvalReport, HarnessError> {
    if examples.is_empty() {
        return Err(HarnessError::NoExamples);
    }
    let mut verdicts = Vec::with_capacity(examples.len());
    let mut failures = Vec::new();
    for example in examples {
        match scorer.score_example(example) {
            Ok(result) => {
                verdicts.push(EvalVerdict {
                    id: example.id.clone(),
                    correct: result.chosen == example.gold,
                    chosen: result.chosen,
                    gold: example.gold,
                    gold_word_count: word_count(&example.choices[example.gold]),
                    fallback_used: result.fallback_used,
                    scores: result.scores,
                    semantic: result.semantic,
                });
            }
            Err(err) => {
                log::warn!("scoring {} failed: {err}", example.id);
                failures.push(ScoreFailure { id: example.id.clone(), message: err.to_string() });
            }
        }
    }
    if verdicts.is_empty() {
        return Err(HarnessError::NoUsableExamples { failed: failures.len() });
    }
    let correct = verdicts.iter().filter(|v| v.correct).count();
    let accuracy = correct as f64 / verdicts.len() as f64;
    Ok(EvalReport { scorer: scorer.name().to_string(), verdicts, failures, accuracy })
}
