//! Parsers for the four benchmark source formats.
//!
//! Each parser consumes the format as published: COPA as an XML corpus of
//! `<item>` elements, SCT as a CSV of four story sentences plus two endings,
//! SocialIQA as JSONL with a separate one-label-per-line file, and CosmosQA
//! as a CSV with four answers and a numeric label. CosmosQA's
//! "None of the above" choices are removed everywhere, and records whose
//! gold answer was that choice are dropped entirely.

use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::Deserialize;

use crate::datasets::{AsksFor, Dataset, DatasetError, Example};

fn read_file(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load a dataset from its published on-disk format.
///
/// For SocialIQA, `path` is the JSONL records file and the labels are read
/// from the sibling file `<stem>-labels.lst`.
pub fn load_dataset(dataset: Dataset, path: &Path) -> Result<Vec<Example>, DatasetError> {
    match dataset {
        Dataset::Copa => parse_copa(&read_file(path)?),
        Dataset::Sct => parse_sct(&read_file(path)?),
        Dataset::SocialIqa => {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
            let labels_path = path.with_file_name(format!("{stem}-labels.lst"));
            load_socialiqa(path, &labels_path)
        }
        Dataset::CosmosQa => parse_cosmosqa(&read_file(path)?),
    }
}

pub fn load_socialiqa(data_path: &Path, labels_path: &Path) -> Result<Vec<Example>, DatasetError> {
    parse_socialiqa(&read_file(data_path)?, &read_file(labels_path)?)
}

// ---------------------------------------------------------------------------
// COPA
// ---------------------------------------------------------------------------

/// Parse the COPA XML corpus: `<item id asks-for most-plausible-alternative>`
/// elements containing `<p>`, `<a1>`, `<a2>`.
pub fn parse_copa(xml: &str) -> Result<Vec<Example>, DatasetError> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(true);

    let malformed = |item: &str, reason: String| DatasetError::Malformed {
        what: "COPA item",
        item: item.to_string(),
        reason,
    };

    let mut examples = Vec::new();
    let mut id = String::new();
    let mut asks_for: Option<AsksFor> = None;
    let mut gold: Option<usize> = None;
    let mut premise = String::new();
    let mut a1 = String::new();
    let mut a2 = String::new();
    let mut field: Option<u8> = None;

    loop {
        let event = reader
            .read_event()
            .map_err(|e| malformed(&id, format!("XML error: {e}")))?;
        match event {
            Event::Start(e) => match e.name().as_ref() {
                b"item" => {
                    id.clear();
                    asks_for = None;
                    gold = None;
                    premise.clear();
                    a1.clear();
                    a2.clear();
                    for attr in e.attributes() {
                        let attr = attr.map_err(|e| malformed(&id, format!("attribute: {e}")))?;
                        let value = attr
                            .unescape_value()
                            .map_err(|e| malformed(&id, format!("attribute value: {e}")))?
                            .into_owned();
                        match attr.key.as_ref() {
                            b"id" => id = value,
                            b"asks-for" => {
                                asks_for = Some(match value.as_str() {
                                    "cause" => AsksFor::Cause,
                                    "effect" => AsksFor::Effect,
                                    other => {
                                        return Err(malformed(
                                            &id,
                                            format!("asks-for must be cause or effect, got {other:?}"),
                                        ))
                                    }
                                })
                            }
                            b"most-plausible-alternative" => {
                                gold = Some(match value.as_str() {
                                    "1" => 0,
                                    "2" => 1,
                                    other => {
                                        return Err(malformed(
                                            &id,
                                            format!("alternative must be 1 or 2, got {other:?}"),
                                        ))
                                    }
                                })
                            }
                            _ => {}
                        }
                    }
                }
                b"p" => field = Some(0),
                b"a1" => field = Some(1),
                b"a2" => field = Some(2),
                _ => {}
            },
            Event::Text(t) => {
                let text = t
                    .unescape()
                    .map_err(|e| malformed(&id, format!("text: {e}")))?;
                match field {
                    Some(0) => premise.push_str(&text),
                    Some(1) => a1.push_str(&text),
                    Some(2) => a2.push_str(&text),
                    _ => {}
                }
            }
            Event::End(e) => match e.name().as_ref() {
                b"p" | b"a1" | b"a2" => field = None,
                b"item" => {
                    if premise.is_empty() || a1.is_empty() || a2.is_empty() {
                        return Err(malformed(&id, "missing premise or alternative".into()));
                    }
                    let example = Example {
                        id: format!("copa-{id}"),
                        context: premise.clone(),
                        question: String::new(),
                        choices: vec![a1.clone(), a2.clone()],
                        gold: gold.ok_or_else(|| {
                            malformed(&id, "missing most-plausible-alternative".into())
                        })?,
                        dataset: Dataset::Copa,
                        asks_for: Some(asks_for.ok_or_else(|| {
                            malformed(&id, "missing asks-for attribute".into())
                        })?),
                    };
                    example.validate()?;
                    examples.push(example);
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(examples)
}

// ---------------------------------------------------------------------------
// SCT
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct SctRow {
    #[serde(rename = "InputStoryid")]
    story_id: String,
    #[serde(rename = "InputSentence1")]
    s1: String,
    #[serde(rename = "InputSentence2")]
    s2: String,
    #[serde(rename = "InputSentence3")]
    s3: String,
    #[serde(rename = "InputSentence4")]
    s4: String,
    #[serde(rename = "RandomFifthSentenceQuiz1")]
    ending1: String,
    #[serde(rename = "RandomFifthSentenceQuiz2")]
    ending2: String,
    #[serde(rename = "AnswerRightEnding")]
    right_ending: u8,
}

/// Parse the Story Cloze Test CSV: four story sentences, two candidate
/// endings, and a 1-based right-ending label.
pub fn parse_sct(csv_text: &str) -> Result<Vec<Example>, DatasetError> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let mut examples = Vec::new();
    for (i, row) in reader.deserialize::<SctRow>().enumerate() {
        let row = row.map_err(|e| DatasetError::Malformed {
            what: "SCT row",
            item: format!("row {}", i + 1),
            reason: e.to_string(),
        })?;
        let gold = match row.right_ending {
            1 => 0,
            2 => 1,
            other => {
                return Err(DatasetError::Malformed {
                    what: "SCT row",
                    item: row.story_id,
                    reason: format!("AnswerRightEnding must be 1 or 2, got {other}"),
                })
            }
        };
        let example = Example {
            id: format!("sct-{}", row.story_id),
            context: [row.s1, row.s2, row.s3, row.s4].join(" "),
            question: String::new(),
            choices: vec![row.ending1, row.ending2],
            gold,
            dataset: Dataset::Sct,
            asks_for: None,
        };
        example.validate()?;
        examples.push(example);
    }
    Ok(examples)
}

// ---------------------------------------------------------------------------
// SocialIQA
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct SocialIqaRow {
    context: String,
    question: String,
    #[serde(rename = "answerA")]
    answer_a: String,
    #[serde(rename = "answerB")]
    answer_b: String,
    #[serde(rename = "answerC")]
    answer_c: String,
}

/// Parse SocialIQA records (one JSON object per line) against a separate
/// label list (one 1-based answer index per line).
pub fn parse_socialiqa(jsonl: &str, labels: &str) -> Result<Vec<Example>, DatasetError> {
    let records: Vec<&str> = jsonl.lines().filter(|l| !l.trim().is_empty()).collect();
    let label_lines: Vec<&str> = labels.lines().filter(|l| !l.trim().is_empty()).collect();
    if records.len() != label_lines.len() {
        return Err(DatasetError::CountMismatch {
            records: records.len(),
            labels: label_lines.len(),
        });
    }
    let mut examples = Vec::with_capacity(records.len());
    for (i, (line, label)) in records.iter().zip(&label_lines).enumerate() {
        let item = format!("line {}", i + 1);
        let row: SocialIqaRow =
            serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                what: "SocialIQA record",
                item: item.clone(),
                reason: e.to_string(),
            })?;
        let gold = match label.trim() {
            "1" => 0,
            "2" => 1,
            "3" => 2,
            other => {
                return Err(DatasetError::Malformed {
                    what: "SocialIQA label",
                    item,
                    reason: format!("label must be 1, 2, or 3, got {other:?}"),
                })
            }
        };
        let example = Example {
            id: format!("socialiqa-{}", i + 1),
            context: row.context,
            question: row.question,
            choices: vec![row.answer_a, row.answer_b, row.answer_c],
            gold,
            dataset: Dataset::SocialIqa,
            asks_for: None,
        };
        example.validate()?;
        examples.push(example);
    }
    Ok(examples)
}

// ---------------------------------------------------------------------------
// CosmosQA
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct CosmosRow {
    id: String,
    context: String,
    question: String,
    answer0: String,
    answer1: String,
    answer2: String,
    answer3: String,
    label: usize,
}

/// True for any "None of the above"-style non-answer, robust to case,
/// punctuation, and trailing words.
fn is_none_of_the_above(text: &str) -> bool {
    let normalized: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    normalized
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .starts_with("none of the above")
}

/// Parse the CosmosQA CSV, removing "None of the above" choices everywhere
/// and dropping records whose gold answer was such a choice.
pub fn parse_cosmosqa(csv_text: &str) -> Result<Vec<Example>, DatasetError> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let mut examples = Vec::new();
    let mut dropped = 0usize;
    for (i, row) in reader.deserialize::<CosmosRow>().enumerate() {
        let row = row.map_err(|e| DatasetError::Malformed {
            what: "CosmosQA row",
            item: format!("row {}", i + 1),
            reason: e.to_string(),
        })?;
        let answers = [row.answer0, row.answer1, row.answer2, row.answer3];
        if row.label >= answers.len() {
            return Err(DatasetError::Malformed {
                what: "CosmosQA row",
                item: row.id,
                reason: format!("label must be 0..=3, got {}", row.label),
            });
        }
        if is_none_of_the_above(&answers[row.label]) {
            dropped += 1;
            continue;
        }
        let mut choices = Vec::with_capacity(4);
        let mut gold = usize::MAX;
        for (j, answer) in answers.into_iter().enumerate() {
            if is_none_of_the_above(&answer) {
                continue;
            }
            if j == row.label {
                gold = choices.len();
            }
            choices.push(answer);
        }
        let example = Example {
            id: format!("cosmosqa-{}", row.id),
            context: row.context,
            question: row.question,
            choices,
            gold,
            dataset: Dataset::CosmosQa,
            asks_for: None,
        };
        example.validate()?;
        examples.push(example);
    }
    if dropped > 0 {
        log::info!("dropped {dropped} CosmosQA records whose gold answer was a non-answer");
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    const COPA_XML: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<copa-corpus>
<item id="501" asks-for="cause" most-plausible-alternative="1">
<p>I saw my breath when I exhaled.</p>
<a1>The weather was chilly.</a1>
<a2>My chest felt tight.</a2>
</item>
<item id="502" asks-for="effect" most-plausible-alternative="2">
<p>The man turned on the faucet.</p>
<a1>The toilet filled with water.</a1>
<a2>Water flowed from the spout.</a2>
</item>
</copa-corpus>
"#;

    #[test]
    fn copa_parses_items() {
        let examples = parse_copa(COPA_XML).unwrap();
        assert_eq!(examples.len(), 2);

        let first = &examples[0];
        assert_eq!(first.id, "copa-501");
        assert_eq!(first.context, "I saw my breath when I exhaled.");
        assert_eq!(first.asks_for, Some(AsksFor::Cause));
        assert_eq!(first.gold, 0);
        assert_eq!(first.choices[0], "The weather was chilly.");

        let second = &examples[1];
        assert_eq!(second.asks_for, Some(AsksFor::Effect));
        assert_eq!(second.gold, 1);
    }

    #[test]
    fn copa_rejects_bad_attributes() {
        let bad = COPA_XML.replace("asks-for=\"cause\"", "asks-for=\"reason\"");
        assert!(parse_copa(&bad).is_err());
        let missing = COPA_XML.replace(" most-plausible-alternative=\"1\"", "");
        assert!(parse_copa(&missing).is_err());
    }

    #[test]
    fn copa_unescapes_entities() {
        let xml = r#"<copa-corpus>
<item id="1" asks-for="cause" most-plausible-alternative="1">
<p>Tom &amp; Ann argued.</p><a1>A &lt;b&gt; tag.</a1><a2>Other.</a2>
</item>
</copa-corpus>"#;
        let examples = parse_copa(xml).unwrap();
        assert_eq!(examples[0].context, "Tom & Ann argued.");
        assert_eq!(examples[0].choices[0], "A <b> tag.");
    }

    const SCT_CSV: &str = "\
InputStoryid,InputSentence1,InputSentence2,InputSentence3,InputSentence4,RandomFifthSentenceQuiz1,RandomFifthSentenceQuiz2,AnswerRightEnding
abc-123,Rick grew up poor.,He dreamed of going to college.,He studied hard.,A letter arrived.,Rick was accepted.,Rick burned the letter.,1
def-456,\"Karen packed, then left.\",She drove for hours.,The road was empty.,Night fell.,She pulled over to rest.,She sold her car.,1
";

    #[test]
    fn sct_parses_rows() {
        let examples = parse_sct(SCT_CSV).unwrap();
        assert_eq!(examples.len(), 2);
        let first = &examples[0];
        assert_eq!(first.id, "sct-abc-123");
        assert_eq!(
            first.context,
            "Rick grew up poor. He dreamed of going to college. He studied hard. A letter arrived."
        );
        assert!(first.question.is_empty());
        assert_eq!(first.gold, 0);
        // quoted field with embedded comma survives
        assert_eq!(examples[1].context.split(". ").next().unwrap(), "Karen packed, then left");
    }

    #[test]
    fn sct_rejects_bad_label() {
        let bad = SCT_CSV.replace(",1\n", ",3\n");
        assert!(parse_sct(&bad).is_err());
    }

    const SIQA_JSONL: &str = r#"{"context": "Sydney went trick or treating and the others joined him happily.", "question": "What will Others want to do next?", "answerA": "get candy", "answerB": "go home", "answerC": "cry"}
{"context": "Tracy held Riley's hand.", "question": "How would Riley feel as a result?", "answerA": "forgotten", "answerB": "loved", "answerC": "angry"}
"#;

    #[test]
    fn socialiqa_joins_records_with_labels() {
        let examples = parse_socialiqa(SIQA_JSONL, "1\n2\n").unwrap();
        assert_eq!(examples.len(), 2);
        assert_eq!(examples[0].id, "socialiqa-1");
        assert_eq!(examples[0].gold, 0);
        assert_eq!(examples[0].choices[0], "get candy");
        assert_eq!(examples[1].gold, 1);
    }

    #[test]
    fn socialiqa_integrity_checks() {
        assert!(matches!(
            parse_socialiqa(SIQA_JSONL, "1\n"),
            Err(DatasetError::CountMismatch { records: 2, labels: 1 })
        ));
        assert!(parse_socialiqa(SIQA_JSONL, "1\n4\n").is_err());
        assert!(parse_socialiqa("{broken\n", "1\n").is_err());
    }

    const COSMOS_CSV: &str = "\
id,context,question,answer0,answer1,answer2,answer3,label
q1,The kitchen smelled of smoke.,Why did the alarm sound when dinner was cooking ?,The pan caught fire .,The doorbell rang .,None of the above choices .,The dog barked .,0
q2,He packed his bag quietly.,What may happen after he leaves the house ?,None of the above choices .,He will catch the early train .,He will unpack at once .,He will fall asleep .,1
q3,She read the letter twice.,What may be true about her ?,None of the above choices .,She is confused .,She wrote the letter .,She cannot read .,0
";

    #[test]
    fn cosmosqa_removes_non_answers() {
        let examples = parse_cosmosqa(COSMOS_CSV).unwrap();
        // q3's gold was the removed choice, so the record is dropped
        assert_eq!(examples.len(), 2);

        let q1 = &examples[0];
        assert_eq!(q1.id, "cosmosqa-q1");
        assert_eq!(q1.choices.len(), 3);
        assert_eq!(q1.gold, 0);
        assert!(q1.choices.iter().all(|c| !c.contains("None of the above")));

        let q2 = &examples[1];
        assert_eq!(q2.choices.len(), 3);
        // original label 1 shifts to 0 after dropping answer0
        assert_eq!(q2.gold, 0);
        assert_eq!(q2.choices[0], "He will catch the early train .");
    }

    #[test]
    fn cosmosqa_non_answer_detection_is_robust() {
        assert!(is_none_of_the_above("None of the above choices ."));
        assert!(is_none_of_the_above("none of the above"));
        assert!(is_none_of_the_above("None of the above choices listed here"));
        assert!(!is_none_of_the_above("None of them arrived."));
        assert!(!is_none_of_the_above("He went home."));
    }

    #[test]
    fn cosmosqa_rejects_bad_label() {
        let bad = COSMOS_CSV.replace(",0\n", ",7\n");
        assert!(parse_cosmosqa(&bad).is_err());
    }

    #[test]
    fn load_dataset_dispatches_from_files() {
        let dir = tempfile::tempdir().unwrap();

        let copa_path = dir.path().join("copa-test.xml");
        std::fs::write(&copa_path, COPA_XML).unwrap();
        assert_eq!(load_dataset(Dataset::Copa, &copa_path).unwrap().len(), 2);

        let sct_path = dir.path().join("sct-dev.csv");
        std::fs::write(&sct_path, SCT_CSV).unwrap();
        assert_eq!(load_dataset(Dataset::Sct, &sct_path).unwrap().len(), 2);

        let siqa_path = dir.path().join("dev.jsonl");
        std::fs::write(&siqa_path, SIQA_JSONL).unwrap();
        std::fs::write(dir.path().join("dev-labels.lst"), "1\n2\n").unwrap();
        assert_eq!(load_dataset(Dataset::SocialIqa, &siqa_path).unwrap().len(), 2);

        let cosmos_path = dir.path().join("valid.csv");
        std::fs::write(&cosmos_path, COSMOS_CSV).unwrap();
        assert_eq!(load_dataset(Dataset::CosmosQa, &cosmos_path).unwrap().len(), 2);
    }
}
