//! Benchmark task instances and the canonical record format.
//!
//! Four source formats (COPA XML, SCT CSV, SocialIQA JSONL + label list,
//! CosmosQA CSV) are parsed into one [`Example`] shape, which round-trips
//! losslessly through a line-delimited JSON canonical format so the harness
//! never touches source-format quirks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod loaders;
pub mod templates;

pub use loaders::load_dataset;
pub use templates::{rewrite_question, statement, RewrittenPrompt};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what} (item {item}): {reason}")]
    Malformed {
        what: &'static str,
        item: String,
        reason: String,
    },
    #[error("record/label count mismatch: {records} records vs {labels} labels")]
    CountMismatch { records: usize, labels: usize },
    #[error("example {id}: gold index {gold} out of range for {choices} choices")]
    GoldOutOfRange { id: String, gold: usize, choices: usize },
    #[error("example {id}: {dataset} requires {expected} choices, found {found}")]
    WrongChoiceCount {
        id: String,
        dataset: Dataset,
        expected: &'static str,
        found: usize,
    },
    #[error("unknown dataset name {0:?} (expected copa, sct, socialiqa, or cosmosqa)")]
    UnknownDataset(String),
    #[error("choice index {index} out of range for {count} choices")]
    ChoiceIndexOutOfRange { index: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Copa,
    Sct,
    SocialIqa,
    CosmosQa,
}

impl Dataset {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Copa => "copa",
            Self::Sct => "sct",
            Self::SocialIqa => "socialiqa",
            Self::CosmosQa => "cosmosqa",
        }
    }
}

impl std::fmt::Display for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Dataset {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "copa" => Ok(Self::Copa),
            "sct" => Ok(Self::Sct),
            "socialiqa" | "social-iqa" | "social_iqa" => Ok(Self::SocialIqa),
            "cosmosqa" | "cosmos-qa" | "cosmos_qa" => Ok(Self::CosmosQa),
            other => Err(DatasetError::UnknownDataset(other.to_string())),
        }
    }
}

/// COPA's question direction: is the right alternative a cause or an effect
/// of the premise?
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AsksFor {
    Cause,
    Effect,
}

/// One multiple-choice task instance in canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    /// Narrative or premise text; empty when the dataset has none.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub context: String,
    /// Interrogative text; empty for SCT, whose instances have no question.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub question: String,
    pub choices: Vec<String>,
    pub gold: usize,
    pub dataset: Dataset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asks_for: Option<AsksFor>,
}

impl Example {
    /// Check structural invariants: gold in range, per-dataset choice arity.
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.gold >= self.choices.len() {
            return Err(DatasetError::GoldOutOfRange {
                id: self.id.clone(),
                gold: self.gold,
                choices: self.choices.len(),
            });
        }
        let (expected, ok) = match self.dataset {
            Dataset::Copa | Dataset::Sct => ("exactly 2", self.choices.len() == 2),
            Dataset::SocialIqa => ("exactly 3", self.choices.len() == 3),
            Dataset::CosmosQa => ("3 or 4", (3..=4).contains(&self.choices.len())),
        };
        if !ok {
            return Err(DatasetError::WrongChoiceCount {
                id: self.id.clone(),
                dataset: self.dataset,
                expected,
                found: self.choices.len(),
            });
        }
        Ok(())
    }

    /// Raw choice text, whitespace-normalized — the surface used both for
    /// encoding and as the attack target.
    pub fn choice_surface(&self, index: usize) -> Result<String, DatasetError> {
        let choice = self
            .choices
            .get(index)
            .ok_or(DatasetError::ChoiceIndexOutOfRange {
                index,
                count: self.choices.len(),
            })?;
        Ok(normalize_whitespace(choice))
    }
}

/// Collapse runs of whitespace to single spaces and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Serialize examples to the canonical line-delimited format.
pub fn write_canonical<W: std::io::Write>(
    mut writer: W,
    examples: &[Example],
) -> std::io::Result<()> {
    for example in examples {
        serde_json::to_writer(&mut writer, example)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Parse examples from the canonical line-delimited format.
pub fn read_canonical(text: &str) -> Result<Vec<Example>, DatasetError> {
    let mut examples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let example: Example =
            serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                what: "canonical record",
                item: format!("line {}", lineno + 1),
                reason: e.to_string(),
            })?;
        example.validate()?;
        examples.push(example);
    }
    Ok(examples)
}
