//! Paraphrase-consistency testing: how stable are a method's ranks when
//! the gold choice is restated?
//!
//! Per example, the gold choice is pooled with sampled wrong choices from
//! other examples, every pooled choice gains a fixed number of paraphrases,
//! the scorer ranks the whole pool, and we measure the spread of the ranks
//! the gold choice and its paraphrases land on. A method that scores
//! meaning rather than surface keeps that group tightly clustered.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::datasets::{normalize_whitespace, Example};
use crate::scorer::{question_seed, ChoiceScorer};
use crate::voting::rank_choices;

/// Source of paraphrases for pooled choices, keyed by choice text. An empty
/// result means the provider has none for that text.
pub trait ParaphraseProvider {
    fn paraphrases(&self, text: &str) -> Vec<String>;
}

/// Precomputed paraphrases loaded from a JSON-lines file of
/// `{"text": ..., "paraphrases": [...]}` records. Lookup keys are
/// whitespace-normalized.
pub struct FileParaphrases {
    map: HashMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct ParaphraseLine {
    text: String,
    paraphrases: Vec<String>,
}

impl FileParaphrases {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut map = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ParaphraseLine =
                serde_json::from_str(line).map_err(|e| HarnessError::BadResource {
                    path: path.display().to_string(),
                    detail: format!("line {}: {e}", lineno + 1),
                })?;
            map.insert(normalize_whitespace(&record.text), record.paraphrases);
        }
        Ok(Self { map })
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<String>)>,
        S: AsRef<str>,
    {
        Self {
            map: pairs
                .into_iter()
                .map(|(text, para)| (normalize_whitespace(text.as_ref()), para))
                .collect(),
        }
    }
}

impl ParaphraseProvider for FileParaphrases {
    fn paraphrases(&self, text: &str) -> Vec<String> {
        self.map.get(&normalize_whitespace(text)).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone)]
pub struct ConsistencyOptions {
    /// Wrong choices sampled from other examples into each pool.
    pub distractors: usize,
    /// Paraphrases required for (and added to) every pooled choice.
    pub paraphrases_per_choice: usize,
    /// Examples to test, sampled without replacement.
    pub sample_n: usize,
    pub seed: u64,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        Self { distractors: 19, paraphrases_per_choice: 3, sample_n: 500, seed: 0 }
    }
}

/// Rank spread of one example's gold group within its scored pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyRecord {
    pub id: String,
    /// Ranks (1-based, within the pool) of the gold choice and each of its
    /// paraphrases, in pool order.
    pub gold_group_ranks: Vec<usize>,
    pub pool_size: usize,
    /// Population standard deviation of `gold_group_ranks`.
    pub rank_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedExample {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub records: Vec<ConsistencyRecord>,
    pub skipped: Vec<SkippedExample>,
    pub mean_rank_std: f64,
}

fn population_std(ranks: &[usize]) -> f64 {
    let n = ranks.len() as f64;
    let mean = ranks.iter().sum::<usize>() as f64 / n;
    let var = ranks.iter().map(|&r| (r as f64 - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

/// Wrong choices available to example `target` from the rest of the split,
/// deduplicated and sorted for a deterministic sampling base.
fn foreign_wrongs(examples: &[Example], target: usize) -> Vec<String> {
    let own_gold = normalize_whitespace(&examples[target].choices[examples[target].gold]);
    let mut seen = BTreeSet::new();
    for (j, other) in examples.iter().enumerate() {
        if j == target {
            continue;
        }
        for (c, choice) in other.choices.iter().enumerate() {
            if c == other.gold {
                continue;
            }
            let text = normalize_whitespace(choice);
            if !text.is_empty() && text != own_gold {
                seen.insert(text);
            }
        }
    }
    seen.into_iter().collect()
}

enum PoolOutcome {
    Record(ConsistencyRecord),
    Skip(String),
}

fn test_one(
    scorer: &dyn ChoiceScorer,
    examples: &[Example],
    target: usize,
    provider: &dyn ParaphraseProvider,
    options: &ConsistencyOptions,
) -> Result<PoolOutcome, HarnessError> {
    let example = &examples[target];
    let mut wrongs = foreign_wrongs(examples, target);
    if wrongs.len() < options.distractors {
        return Ok(PoolOutcome::Skip(format!(
            "only {} distinct foreign wrong choices, need {}",
            wrongs.len(),
            options.distractors
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(question_seed(options.seed, &example.id));
    wrongs.shuffle(&mut rng);
    wrongs.truncate(options.distractors);

    let mut bases = Vec::with_capacity(1 + options.distractors);
    bases.push(example.choices[example.gold].clone());
    bases.extend(wrongs);

    let mut pool = Vec::with_capacity(bases.len() * (1 + options.paraphrases_per_choice));
    for base in &bases {
        let paraphrases = provider.paraphrases(base);
        if paraphrases.len() < options.paraphrases_per_choice {
            return Ok(PoolOutcome::Skip(format!(
                "provider returned {} paraphrases for {base:?}, need {}",
                paraphrases.len(),
                options.paraphrases_per_choice
            )));
        }
        pool.push(base.clone());
        pool.extend(paraphrases.into_iter().take(options.paraphrases_per_choice));
    }

    let mut variant = example.clone();
    variant.choices = pool;
    variant.gold = 0;
    let result = scorer.score_example(&variant)?;

    let (_, ranking) = rank_choices(&result.scores)?;
    let mut rank_of = vec![0usize; ranking.len()];
    for (position, &index) in ranking.iter().enumerate() {
        rank_of[index] = position + 1;
    }
    let gold_group_ranks: Vec<usize> =
        (0..=options.paraphrases_per_choice).map(|i| rank_of[i]).collect();
    let rank_std = population_std(&gold_group_ranks);
    Ok(PoolOutcome::Record(ConsistencyRecord {
        id: example.id.clone(),
        gold_group_ranks,
        pool_size: ranking.len(),
        rank_std,
    }))
}

/// Run the consistency test over a seeded sample of examples and average
/// the per-example rank standard deviations.
pub fn consistency_test(
    scorer: &dyn ChoiceScorer,
    examples: &[Example],
    provider: &dyn ParaphraseProvider,
    options: &ConsistencyOptions,
) -> Result<ConsistencyReport, HarnessError> {
    if examples.is_empty() {
        return Err(HarnessError::NoExamples);
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(question_seed(options.seed, "consistency-order"));
    order.shuffle(&mut rng);

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for &target in &order {
        if records.len() >= options.sample_n {
            break;
        }
        match test_one(scorer, examples, target, provider, options)? {
            PoolOutcome::Record(record) => records.push(record),
            PoolOutcome::Skip(reason) => {
                log::warn!("consistency: skipping {}: {reason}", examples[target].id);
                skipped.push(SkippedExample { id: examples[target].id.clone(), reason });
            }
        }
    }
    if records.is_empty() {
        return Err(HarnessError::NoConsistencyRecords { skipped: skipped.len() });
    }
    let mean_rank_std = records.iter().map(|r| r.rank_std).sum::<f64>() / records.len() as f64;
    Ok(ConsistencyReport { records, skipped, mean_rank_std })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;

    const SQRT_1_25: f64 = 1.118_033_988_749_895;

    /// Three examples whose wrong choices give each target two foreign
    /// distractors.
    fn split() -> Vec<Example> {
        vec![
            copa("e1", "P1.", &["zebra one", "dull dud"], 0),
            copa("e2", "P2.", &["hippo one", "flat fizz"], 0),
            copa("e3", "P3.", &["rhino one", "limp lump"], 0),
        ]
    }

    /// Paraphrases that keep each base's keyword, so a keyword scorer ties
    /// the whole group.
    fn provider() -> FileParaphrases {
        let para = |w: &str| vec![format!("{w} two"), format!("{w} three"), format!("{w} four")];
        FileParaphrases::from_pairs([
            ("zebra one", para("zebra")),
            ("hippo one", para("hippo")),
            ("rhino one", para("rhino")),
            ("dull dud", para("dull")),
            ("flat fizz", para("flat")),
            ("limp lump", para("limp")),
        ])
    }

    fn options() -> ConsistencyOptions {
        ConsistencyOptions { distractors: 2, paraphrases_per_choice: 3, sample_n: 10, seed: 7 }
    }

    #[test]
    fn tied_gold_group_lands_consecutive_ranks() {
        // the gold keyword dominates; its group ties and the index
        // tie-break makes the ranks exactly 1..4
        let scorer = WordValueScorer::new([("zebra", 5.0), ("hippo", 5.0), ("rhino", 5.0)]);
        let report = consistency_test(&scorer, &split(), &provider(), &options()).unwrap();
        assert_eq!(report.records.len(), 3);
        for record in &report.records {
            assert_eq!(record.gold_group_ranks, vec![1, 2, 3, 4]);
            assert_eq!(record.pool_size, 12);
            assert!((record.rank_std - SQRT_1_25).abs() < 1e-12);
        }
        assert!((report.mean_rank_std - SQRT_1_25).abs() < 1e-12);
    }

    #[test]
    fn ranks_are_distinct_and_std_bounded_below() {
        let scorer = WordValueScorer::new([("zebra", 5.0), ("hippo", 2.0), ("rhino", 1.0)]);
        let report = consistency_test(&scorer, &split(), &provider(), &options()).unwrap();
        for record in &report.records {
            let mut seen = std::collections::BTreeSet::new();
            for &rank in &record.gold_group_ranks {
                assert!((1..=record.pool_size).contains(&rank));
                assert!(seen.insert(rank), "ranks must be distinct");
            }
            assert!(record.rank_std >= SQRT_1_25 - 1e-12);
        }
    }

    #[test]
    fn scattered_paraphrase_widens_the_std() {
        // e1's gold group: "zebra one" + zebra paraphrases, but one
        // paraphrase loses its keyword and sinks to the pool's bottom
        let mut provider_map = provider();
        provider_map.map.insert(
            normalize_whitespace("zebra one"),
            vec!["zebra two".into(), "zebra three".into(), "nothing scores this".into()],
        );
        let scorer = WordValueScorer::new([
            ("zebra", 5.0),
            ("hippo", 1.0),
            ("rhino", 1.0),
            ("dull", 1.0),
            ("flat", 1.0),
            ("limp", 1.0),
        ]);
        let report =
            consistency_test(&scorer, &split(), &provider_map, &options()).unwrap();
        let e1 = report.records.iter().find(|r| r.id == "e1").unwrap();
        assert_eq!(e1.gold_group_ranks, vec![1, 2, 3, 12]);
        let expected = population_std(&[1, 2, 3, 12]);
        assert!((e1.rank_std - expected).abs() < 1e-12);
        assert!(e1.rank_std > SQRT_1_25);

        // aggregate is the arithmetic mean of the per-example stds
        let by_hand: f64 =
            report.records.iter().map(|r| r.rank_std).sum::<f64>() / report.records.len() as f64;
        assert_eq!(report.mean_rank_std, by_hand);
    }

    #[test]
    fn missing_paraphrases_skip_the_example() {
        let scorer = WordValueScorer::new([("zebra", 5.0)]);
        let thin = FileParaphrases::from_pairs([
            ("zebra one", vec!["zebra two".into(), "zebra three".into(), "zebra four".into()]),
            // distractor coverage incomplete: "dull dud" has only 2
            ("dull dud", vec!["dull a".into(), "dull b".into()]),
            ("flat fizz", vec!["flat a".into(), "flat b".into(), "flat c".into()]),
            ("limp lump", vec!["limp a".into(), "limp b".into(), "limp c".into()]),
            ("hippo one", vec!["hippo a".into(), "hippo b".into(), "hippo c".into()]),
            ("rhino one", vec!["rhino a".into(), "rhino b".into(), "rhino c".into()]),
        ]);
        let report = consistency_test(&scorer, &split(), &thin, &options()).unwrap();
        // every example that sampled "dull dud" as a distractor is skipped
        assert!(!report.skipped.is_empty());
        for skip in &report.skipped {
            assert!(skip.reason.contains("paraphrases"), "reason: {}", skip.reason);
        }
        assert_eq!(report.records.len() + report.skipped.len(), 3);
    }

    #[test]
    fn too_few_distractors_skip_the_example() {
        let scorer = WordValueScorer::new([("zebra", 5.0)]);
        let opts = ConsistencyOptions { distractors: 5, ..options() };
        let err = consistency_test(&scorer, &split(), &provider(), &opts).unwrap_err();
        assert!(matches!(err, HarnessError::NoConsistencyRecords { skipped: 3 }));
    }

    #[test]
    fn sampling_is_seed_stable_and_bounded() {
        let scorer = WordValueScorer::new([("zebra", 5.0), ("hippo", 5.0), ("rhino", 5.0)]);
        let opts = ConsistencyOptions { sample_n: 2, ..options() };
        let a = consistency_test(&scorer, &split(), &provider(), &opts).unwrap();
        let b = consistency_test(&scorer, &split(), &provider(), &opts).unwrap();
        assert_eq!(a.records.len(), 2);
        let ids = |r: &ConsistencyReport| {
            r.records.iter().map(|x| x.id.clone()).collect::<Vec<_>>()
        };
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn paraphrase_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("paraphrases.jsonl");
        std::fs::write(
            &path,
            r#"{"text": "zebra  one", "paraphrases": ["a", "b", "c"]}
{"text": "other", "paraphrases": []}
"#,
        )
        .unwrap();
        let provider = FileParaphrases::load(&path).unwrap();
        // lookup normalizes whitespace on both sides
        assert_eq!(provider.paraphrases("zebra one"), vec!["a", "b", "c"]);
        assert!(provider.paraphrases("unknown").is_empty());

        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(
            FileParaphrases::load(&path),
            Err(HarnessError::BadResource { .. })
        ));
    }
}
