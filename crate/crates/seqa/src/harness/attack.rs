//! Word-substitution attack on the gold choice of correctly answered
//! examples.
//!
//! The loop mirrors the classic query-based text attack: rank the gold
//! choice's words by how much deleting each one hurts its score, then walk
//! that order trying part-of-speech-compatible lexicon substitutes whose
//! perturbed choice stays close to the original under the sentence encoder,
//! committing the substitute that demotes the gold choice furthest. The
//! question, context, and wrong choices are never touched.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::backends::SentenceEncoder;
use crate::datasets::Example;
use crate::scorer::{ChoiceScorer, ChoiceScores};
use crate::voting::{cosine, rank_choices, FeatureVector};

/// External lexicons the attack draws candidates from, plus its knobs.
/// All knobs are caller-visible because the underlying attack tool's
/// parameters vary between implementations.
pub struct AttackResources {
    /// word → candidate substitutes, lowercased keys.
    pub synonyms: HashMap<String, Vec<String>>,
    /// word → part-of-speech tag. When nonempty, a substitution must match
    /// the original word's tag; words missing from the table are rejected.
    pub pos_tags: HashMap<String, String>,
    /// Optional word vectors: candidates are re-ranked by vector similarity
    /// to the original word and dropped when that similarity is ≤ 0.
    pub word_vectors: Option<HashMap<String, FeatureVector>>,
    /// Maximum substitutes tried per word.
    pub max_candidates: usize,
    /// Minimum encoder similarity between the original and perturbed choice.
    pub min_similarity: f64,
}

impl AttackResources {
    pub fn new(synonyms: HashMap<String, Vec<String>>) -> Self {
        Self {
            synonyms,
            pos_tags: HashMap::new(),
            word_vectors: None,
            max_candidates: 50,
            min_similarity: 0.84,
        }
    }

    pub fn with_pos_tags(mut self, tags: HashMap<String, String>) -> Self {
        self.pos_tags = tags;
        self
    }

    pub fn with_word_vectors(mut self, vectors: HashMap<String, FeatureVector>) -> Self {
        self.word_vectors = Some(vectors);
        self
    }

    pub fn with_max_candidates(mut self, n: usize) -> Self {
        self.max_candidates = n;
        self
    }

    pub fn with_min_similarity(mut self, s: f64) -> Self {
        self.min_similarity = s;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.synonyms.is_empty() {
            return Err(HarnessError::MissingResources("synonym lexicon is empty".into()));
        }
        if self.max_candidates == 0 {
            return Err(HarnessError::MissingResources("max_candidates must be ≥ 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.min_similarity) {
            return Err(HarnessError::MissingResources(format!(
                "min_similarity {} outside [-1, 1]",
                self.min_similarity
            )));
        }
        Ok(())
    }

    /// Ordered, filtered substitutes for one (lowercased) word.
    fn candidates(&self, word: &str) -> Vec<String> {
        let Some(raw) = self.synonyms.get(word) else { return Vec::new() };
        let mut kept: Vec<String> = raw
            .iter()
            .filter(|sub| !sub.eq_ignore_ascii_case(word))
            .filter(|sub| self.pos_compatible(word, sub))
            .cloned()
            .collect();
        if let Some(vectors) = &self.word_vectors {
            let mut scored: Vec<(f64, String)> = Vec::new();
            for sub in kept {
                let sim = match (vectors.get(word), vectors.get(sub.as_str())) {
                    (Some(a), Some(b)) => cosine(a, b).unwrap_or(0.0),
                    _ => 0.0,
                };
                if sim > 0.0 {
                    scored.push((sim, sub));
                }
            }
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            kept = scored.into_iter().map(|(_, sub)| sub).collect();
        }
        kept.truncate(self.max_candidates);
        kept
    }

    fn pos_compatible(&self, word: &str, substitute: &str) -> bool {
        if self.pos_tags.is_empty() {
            return true;
        }
        match (self.pos_tags.get(word), self.pos_tags.get(substitute)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }
}

/// Outcome of attacking one originally-correct example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRecord {
    pub id: String,
    pub original_choice: String,
    pub perturbed_choice: String,
    /// Number of words changed; 0 only on failures that committed nothing.
    pub perturbed_words: usize,
    /// Changed words over the original word count.
    pub perturbed_fraction: f64,
    /// Encoder similarity between original and perturbed choice.
    pub similarity: f64,
    pub success: bool,
    pub queries: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AttackSummary {
    pub attacked: usize,
    pub successes: usize,
    /// Examples the scorer already got wrong, which the attack skips.
    pub skipped_incorrect: usize,
    pub total_queries: usize,
}

/// Aggregate attack metrics in percent, matching the robustness table
/// layout: original accuracy, after-attack accuracy, success rate, and the
/// perturbation statistics of successful attacks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub original_accuracy: f64,
    pub after_attack_accuracy: f64,
    pub attack_success_rate: f64,
    pub attacked: usize,
    pub successes: usize,
    /// Mean perturbed-word percentage over successful attacks.
    pub mean_perturbed_pct: Option<f64>,
    /// Mean original/perturbed encoder similarity over successful attacks.
    pub mean_similarity: Option<f64>,
}

/// success rate implied by an (original, after-attack) accuracy pair.
pub fn success_rate_from_accuracies(original: f64, after: f64) -> f64 {
    assert!(original > 0.0, "original accuracy must be positive");
    (original - after) / original
}

/// Summarize attack records against the original accuracy (a fraction in
/// [0, 1] or a percentage — the after-attack value keeps the same unit).
pub fn attack_metrics(
    records: &[AttackRecord],
    original_accuracy: f64,
) -> Result<AttackMetrics, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NothingAttacked);
    }
    let attacked = records.len();
    let successes: Vec<&AttackRecord> = records.iter().filter(|r| r.success).collect();
    let success_rate = successes.len() as f64 / attacked as f64;
    let (mean_perturbed_pct, mean_similarity) = if successes.is_empty() {
        (None, None)
    } else {
        let n = successes.len() as f64;
        (
            Some(successes.iter().map(|r| 100.0 * r.perturbed_fraction).sum::<f64>() / n),
            Some(successes.iter().map(|r| r.similarity).sum::<f64>() / n),
        )
    };
    Ok(AttackMetrics {
        original_accuracy,
        after_attack_accuracy: original_accuracy * (1.0 - success_rate),
        attack_success_rate: success_rate,
        attacked,
        successes: successes.len(),
        mean_perturbed_pct,
        mean_similarity,
    })
}

// ---------------------------------------------------------------------------
// Tokenization of the choice under attack
// ---------------------------------------------------------------------------

/// One whitespace token, split into an alphanumeric core and the
/// punctuation glued to it, so substitutions keep punctuation intact.
#[derive(Debug, Clone)]
struct Token {
    prefix: String,
    core: String,
    suffix: String,
}

impl Token {
    fn render(&self) -> String {
        format!("{}{}{}", self.prefix, self.core, self.suffix)
    }

    fn substitutable(&self) -> bool {
        !self.core.is_empty()
    }
}

fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .map(|raw| {
            let start = raw.find(|c: char| c.is_alphanumeric());
            match start {
                None => Token { prefix: raw.to_string(), core: String::new(), suffix: String::new() },
                Some(s) => {
                    let end = raw.rfind(|c: char| c.is_alphanumeric()).unwrap() + 1;
                    let end = raw[end..]
                        .char_indices()
                        .next()
                        .map(|_| end)
                        .unwrap_or(raw.len());
                    Token {
                        prefix: raw[..s].to_string(),
                        core: raw[s..end].to_string(),
                        suffix: raw[end..].to_string(),
                    }
                }
            }
        })
        .collect()
}

fn rebuild(tokens: &[Token]) -> String {
    tokens.iter().map(Token::render).collect::<Vec<_>>().join(" ")
}

fn rebuild_without(tokens: &[Token], skip: usize) -> String {
    tokens
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, t)| t.render())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Match the original core's leading capitalization.
fn match_case(substitute: &str, original: &str) -> String {
    let capitalize = original.chars().next().map(char::is_uppercase).unwrap_or(false);
    if !capitalize {
        return substitute.to_string();
    }
    let mut chars = substitute.chars();
    match chars.next() {
        None => String::new(),
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
    }
}

// ---------------------------------------------------------------------------
// The attack loop
// ---------------------------------------------------------------------------

struct AttackRun<'a> {
    scorer: &'a dyn ChoiceScorer,
    encoder: &'a dyn SentenceEncoder,
    resources: &'a AttackResources,
    example: &'a Example,
    budget: usize,
    queries: usize,
}

impl<'a> AttackRun<'a> {
    /// Score the example with the gold choice replaced; `None` once the
    /// query budget is spent.
    fn score_with_gold(&mut self, gold_text: &str) -> Result<Option<ChoiceScores>, HarnessError> {
        if self.queries >= self.budget {
            return Ok(None);
        }
        let mut variant = self.example.clone();
        variant.choices[self.example.gold] = gold_text.to_string();
        self.queries += 1;
        Ok(Some(self.scorer.score_example(&variant)?))
    }

    fn finish(
        &self,
        original: &str,
        original_feature: &FeatureVector,
        tokens: &[Token],
        changed: &BTreeSet<usize>,
        total_words: usize,
        success: bool,
    ) -> Result<AttackRecord, HarnessError> {
        let perturbed = rebuild(tokens);
        let similarity = cosine(original_feature, &self.encoder.encode(&perturbed)?)?;
        Ok(AttackRecord {
            id: self.example.id.clone(),
            original_choice: original.to_string(),
            perturbed_choice: perturbed,
            perturbed_words: changed.len(),
            perturbed_fraction: changed.len() as f64 / total_words as f64,
            similarity,
            success,
            queries: self.queries,
        })
    }
}

fn gold_rank(scores: &[f64], gold: usize) -> Result<usize, HarnessError> {
    let (_, ranking) = rank_choices(scores)?;
    Ok(ranking.iter().position(|&j| j == gold).expect("gold index present") + 1)
}

/// Attack one example. Returns `None` when the scorer was already wrong on
/// it (nothing to attack).
fn attack_example(
    scorer: &dyn ChoiceScorer,
    encoder: &dyn SentenceEncoder,
    example: &Example,
    resources: &AttackResources,
    budget: usize,
) -> Result<Option<AttackRecord>, HarnessError> {
    let mut run = AttackRun { scorer, encoder, resources, example, budget, queries: 0 };
    let gold = example.gold;
    let original = example.choices[gold].clone();

    let Some(base) = run.score_with_gold(&original)? else {
        // budget spent before the baseline query: nothing attackable
        return Err(HarnessError::NothingAttacked);
    };
    if base.chosen != gold {
        return Ok(None);
    }

    let original_feature = run.encoder.encode(&original)?;
    let tokens = tokenize(&original);
    let total_words = tokens.len().max(1);
    let mut base_gold_score = base.scores[gold];
    let mut current_rank = gold_rank(&base.scores, gold)?;

    // importance = score drop when the word is deleted, on the original text
    let mut importance: Vec<(usize, f64)> = Vec::new();
    let mut exhausted = false;
    for (i, token) in tokens.iter().enumerate() {
        if !token.substitutable() {
            continue;
        }
        let without = rebuild_without(&tokens, i);
        if without.trim().is_empty() {
            // sole word: deleting it leaves nothing to score
            importance.push((i, f64::MAX));
            continue;
        }
        match run.score_with_gold(&without)? {
            Some(result) => importance.push((i, base_gold_score - result.scores[gold])),
            None => {
                exhausted = true;
                break;
            }
        }
    }
    importance.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut current = tokens.clone();
    let mut changed: BTreeSet<usize> = BTreeSet::new();

    if !exhausted {
        'words: for &(position, _) in &importance {
            let word = tokens[position].core.to_lowercase();
            let mut best: Option<(usize, f64, ChoiceScores, Token)> = None;
            for substitute in run.resources.candidates(&word) {
                let mut trial_tokens = current.clone();
                trial_tokens[position].core = match_case(&substitute, &tokens[position].core);
                let trial_text = rebuild(&trial_tokens);
                let trial_feature = run.encoder.encode(&trial_text)?;
                if cosine(&original_feature, &trial_feature)? < run.resources.min_similarity {
                    continue;
                }
                let Some(result) = run.score_with_gold(&trial_text)? else {
                    break 'words;
                };
                let rank = gold_rank(&result.scores, gold)?;
                let drop = base_gold_score - result.scores[gold];
                let better = match &best {
                    None => true,
                    Some((best_rank, best_drop, _, _)) => {
                        rank > *best_rank || (rank == *best_rank && drop > *best_drop)
                    }
                };
                if better {
                    best = Some((rank, drop, result, trial_tokens[position].clone()));
                }
            }
            if let Some((rank, drop, result, token)) = best {
                // commit only a demotion; a substitute that helps the gold
                // choice stays out
                if rank > current_rank || drop > 0.0 {
                    current[position] = token;
                    changed.insert(position);
                    current_rank = rank;
                    base_gold_score = result.scores[gold];
                    if result.chosen != gold {
                        return run
                            .finish(&original, &original_feature, &current, &changed, total_words, true)
                            .map(Some);
                    }
                }
            }
        }
    }

    run.finish(&original, &original_feature, &current, &changed, total_words, false)
        .map(Some)
}

/// Attack every example the scorer originally answers correctly.
///
/// `query_budget` caps scorer calls per example; exhausting it records a
/// failed attack rather than raising an error.
pub fn run_attack(
    scorer: &dyn ChoiceScorer,
    encoder: &dyn SentenceEncoder,
    examples: &[Example],
    resources: &AttackResources,
    query_budget: usize,
) -> Result<(Vec<AttackRecord>, AttackSummary), HarnessError> {
    resources.validate()?;
    if examples.is_empty() {
        return Err(HarnessError::NoExamples);
    }
    let mut records = Vec::new();
    let mut summary = AttackSummary::default();
    for example in examples {
        match attack_example(scorer, encoder, example, resources, query_budget.max(1))? {
            None => summary.skipped_incorrect += 1,
            Some(record) => {
                summary.attacked += 1;
                summary.total_queries += record.queries;
                if record.success {
                    summary.successes += 1;
                }
                records.push(record);
            }
        }
    }
    Ok((records, summary))
}

/// Re-run every successful record's perturbed choice through the scorer and
/// count how many still flip the argmax off the gold choice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayReport {
    pub checked: usize,
    pub still_flipped: usize,
}

pub fn replay_attacks(
    scorer: &dyn ChoiceScorer,
    examples: &[Example],
    records: &[AttackRecord],
) -> Result<ReplayReport, HarnessError> {
    let by_id: HashMap<&str, &Example> =
        examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut checked = 0;
    let mut still_flipped = 0;
    for record in records.iter().filter(|r| r.success) {
        let example = by_id.get(record.id.as_str()).ok_or_else(|| HarnessError::BadResource {
            path: "attack records".into(),
            detail: format!("record {} has no matching example", record.id),
        })?;
        let mut variant = (*example).clone();
        variant.choices[example.gold] = record.perturbed_choice.clone();
        let result = scorer.score_example(&variant)?;
        checked += 1;
        if result.chosen != example.gold {
            still_flipped += 1;
        }
    }
    Ok(ReplayReport { checked, still_flipped })
}

// ---------------------------------------------------------------------------
// Resource files
// ---------------------------------------------------------------------------

fn read_lines(path: &Path) -> Result<Vec<String>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

/// `word substitute [substitute ...]` per line.
pub fn load_synonyms(path: &Path) -> Result<HashMap<String, Vec<String>>, HarnessError> {
    let mut map = HashMap::new();
    for line in read_lines(path)? {
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("nonempty line").to_lowercase();
        let subs: Vec<String> = parts.map(|s| s.to_string()).collect();
        if subs.is_empty() {
            return Err(HarnessError::BadResource {
                path: path.display().to_string(),
                detail: format!("word {word:?} lists no substitutes"),
            });
        }
        map.insert(word, subs);
    }
    Ok(map)
}

/// `word TAG` per line.
pub fn load_pos_tags(path: &Path) -> Result<HashMap<String, String>, HarnessError> {
    let mut map = HashMap::new();
    for line in read_lines(path)? {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(HarnessError::BadResource {
                path: path.display().to_string(),
                detail: format!("expected `word TAG`, got {line:?}"),
            });
        }
        map.insert(parts[0].to_lowercase(), parts[1].to_string());
    }
    Ok(map)
}

/// `word v1 v2 ...` per line, all rows the same dimension.
pub fn load_word_vectors(path: &Path) -> Result<HashMap<String, FeatureVector>, HarnessError> {
    let mut map = HashMap::new();
    let mut dim: Option<usize> = None;
    for line in read_lines(path)? {
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("nonempty line").to_lowercase();
        let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| HarnessError::BadResource {
            path: path.display().to_string(),
            detail: format!("bad vector for {word:?}: {e}"),
        })?;
        if let Some(d) = dim {
            if values.len() != d {
                return Err(HarnessError::BadResource {
                    path: path.display().to_string(),
                    detail: format!("vector for {word:?} has {} dims, expected {d}", values.len()),
                });
            }
        } else {
            dim = Some(values.len());
        }
        let vector = FeatureVector::new(values).map_err(|e| HarnessError::BadResource {
            path: path.display().to_string(),
            detail: format!("bad vector for {word:?}: {e}"),
        })?;
        map.insert(word, vector);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::backends::stub::HashingEncoder;

    fn lexicon(pairs: &[(&str, &[&str])]) -> HashMap<String, Vec<String>> {
        pairs
            .iter()
            .map(|(w, subs)| (w.to_string(), subs.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    fn loose_resources(pairs: &[(&str, &[&str])]) -> AttackResources {
        AttackResources::new(lexicon(pairs)).with_min_similarity(0.2)
    }

    #[test]
    fn surface_blind_scorer_is_unattackable() {
        let scorer = IndexScorer { by_index: vec![1.0, 0.0] };
        let encoder = HashingEncoder::new("t", 128);
        let examples = vec![
            copa("e1", "Premise one.", &["chilly air outside", "warm tea inside"], 0),
            copa("e2", "Premise two.", &["chilly wind blew", "hot soup steamed"], 0),
        ];
        let resources = loose_resources(&[("chilly", &["cold"])]);
        let (records, summary) =
            run_attack(&scorer, &encoder, &examples, &resources, 100).unwrap();
        assert_eq!(summary.attacked, 2);
        assert_eq!(summary.successes, 0);
        assert!(records.iter().all(|r| !r.success));
        let metrics = attack_metrics(&records, 1.0).unwrap();
        assert_eq!(metrics.attack_success_rate, 0.0);
        assert_eq!(metrics.after_attack_accuracy, 1.0);
        assert!(metrics.mean_similarity.is_none());
    }

    #[test]
    fn keyword_scorer_always_falls() {
        let scorer = WordValueScorer::new([("chilly", 1.0), ("warm", 0.5)]);
        let encoder = HashingEncoder::new("t", 128);
        let examples = vec![copa(
            "e1",
            "I saw my breath.",
            &["the air was chilly today", "the tea was warm today"],
            0,
        )];
        let resources = loose_resources(&[("chilly", &["cold"])]);
        let (records, summary) =
            run_attack(&scorer, &encoder, &examples, &resources, 100).unwrap();
        assert_eq!(summary.successes, 1);
        let record = &records[0];
        assert!(record.success);
        assert!(record.perturbed_choice.contains("cold"));
        assert_eq!(record.perturbed_words, 1);
        assert!((record.perturbed_fraction - 0.2).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&record.similarity));
        assert!(record.queries > 0);

        let replay = replay_attacks(&scorer, &examples, &records).unwrap();
        assert_eq!(replay.checked, 1);
        assert_eq!(replay.still_flipped, 1);

        let metrics = attack_metrics(&records, 0.8).unwrap();
        assert_eq!(metrics.attack_success_rate, 1.0);
        assert_eq!(metrics.after_attack_accuracy, 0.0);
        assert_eq!(metrics.mean_perturbed_pct, Some(20.0));
    }

    #[test]
    fn commits_the_substitute_that_demotes_gold_furthest() {
        let scorer =
            WordValueScorer::new([("chilly", 1.0), ("cold", 0.4), ("cool", 0.1), ("warm", 0.5)]);
        let encoder = HashingEncoder::new("t", 128);
        let examples = vec![copa(
            "e1",
            "Premise.",
            &["a chilly gust arrived here", "a warm breeze arrived here"],
            0,
        )];
        // both substitutes flip; "cool" drops the gold score further
        let resources = loose_resources(&[("chilly", &["cold", "cool"])]);
        let (records, _) = run_attack(&scorer, &encoder, &examples, &resources, 100).unwrap();
        assert!(records[0].success);
        assert!(records[0].perturbed_choice.contains("cool"));
    }

    #[test]
    fn originally_wrong_examples_are_skipped() {
        let scorer = WordValueScorer::new([("warm", 1.0)]);
        let encoder = HashingEncoder::new("t", 128);
        // gold is choice 0 but the scorer picks choice 1
        let examples =
            vec![copa("e1", "Premise.", &["chilly air here", "warm tea here"], 0)];
        let resources = loose_resources(&[("chilly", &["cold"])]);
        let (records, summary) =
            run_attack(&scorer, &encoder, &examples, &resources, 100).unwrap();
        assert!(records.is_empty());
        assert_eq!(summary.skipped_incorrect, 1);
        assert_eq!(summary.attacked, 0);
    }

    #[test]
    fn budget_exhaustion_is_a_recorded_failure() {
        let scorer = WordValueScorer::new([("chilly", 1.0), ("warm", 0.5)]);
        let encoder = HashingEncoder::new("t", 128);
        let examples = vec![copa(
            "e1",
            "Premise.",
            &["the air was chilly today", "the tea was warm today"],
            0,
        )];
        let resources = loose_resources(&[("chilly", &["cold"])]);
        // budget 2: baseline + one importance query, then stop
        let (records, summary) = run_attack(&scorer, &encoder, &examples, &resources, 2).unwrap();
        assert_eq!(summary.attacked, 1);
        assert!(!records[0].success);
        assert_eq!(records[0].queries, 2);
        assert_eq!(records[0].perturbed_words, 0);
        assert_eq!(records[0].similarity, 1.0, "nothing changed");
    }

    #[test]
    fn similarity_threshold_blocks_distant_substitutes() {
        let scorer = WordValueScorer::new([("chilly", 1.0), ("warm", 0.5)]);
        let encoder = HashingEncoder::new("t", 128);
        let examples =
            vec![copa("e1", "Premise.", &["chilly air here", "warm tea here"], 0)];
        let resources =
            AttackResources::new(lexicon(&[("chilly", &["cold"])])).with_min_similarity(0.999);
        let (records, summary) =
            run_attack(&scorer, &encoder, &examples, &resources, 100).unwrap();
        assert_eq!(summary.successes, 0);
        assert!(!records[0].success);
        assert_eq!(records[0].perturbed_choice, records[0].original_choice);
    }

    #[test]
    fn pos_mismatch_blocks_substitutes() {
        let scorer = WordValueScorer::new([("chilly", 1.0), ("warm", 0.5)]);
        let encoder = HashingEncoder::new("t", 128);
        let examples =
            vec![copa("e1", "Premise.", &["chilly air here", "warm tea here"], 0)];
        let mut tags = HashMap::new();
        tags.insert("chilly".to_string(), "ADJ".to_string());
        tags.insert("cold".to_string(), "NOUN".to_string());
        let resources = AttackResources::new(lexicon(&[("chilly", &["cold"])]))
            .with_min_similarity(0.2)
            .with_pos_tags(tags);
        let (records, _) = run_attack(&scorer, &encoder, &examples, &resources, 100).unwrap();
        assert!(!records[0].success);
    }

    #[test]
    fn substitution_preserves_case_and_punctuation() {
        let tokens = tokenize("Chilly, indeed!");
        assert_eq!(tokens[0].core, "Chilly");
        assert_eq!(tokens[0].suffix, ",");
        assert_eq!(match_case("cold", "Chilly"), "Cold");
        assert_eq!(match_case("cold", "chilly"), "cold");
        let mut swapped = tokens.clone();
        swapped[0].core = match_case("cold", &tokens[0].core);
        assert_eq!(rebuild(&swapped), "Cold, indeed!");
        assert_eq!(rebuild_without(&tokens, 0), "indeed!");
    }

    #[test]
    fn metric_identity_reproduces_published_rows() {
        // 73.6 → 4.6 implies a 93.8% success rate
        let implied = 100.0 * success_rate_from_accuracies(73.6, 4.6);
        assert!((implied - 93.8).abs() < 0.1, "got {implied}");
        // 79.4 → 59.0 implies 25.7%
        let implied = 100.0 * success_rate_from_accuracies(79.4, 59.0);
        assert!((implied - 25.7).abs() < 0.1, "got {implied}");

        // and the identity runs forward: 15/16 successes on original 73.6
        let mut records: Vec<AttackRecord> = (0..16)
            .map(|i| AttackRecord {
                id: format!("e{i}"),
                original_choice: "a".into(),
                perturbed_choice: "b".into(),
                perturbed_words: 1,
                perturbed_fraction: 0.5,
                similarity: 0.9,
                success: true,
                queries: 1,
            })
            .collect();
        records[0].success = false;
        let metrics = attack_metrics(&records, 73.6).unwrap();
        assert!((metrics.after_attack_accuracy - 4.6).abs() < 1e-9);
        assert!((100.0 * metrics.attack_success_rate - 93.75).abs() < 1e-9);
    }

    #[test]
    fn four_of_ten_successes_is_forty_percent() {
        let records: Vec<AttackRecord> = (0..10)
            .map(|i| AttackRecord {
                id: format!("e{i}"),
                original_choice: "a".into(),
                perturbed_choice: "b".into(),
                perturbed_words: 1,
                perturbed_fraction: 1.0,
                similarity: 1.0,
                success: i < 4,
                queries: 1,
            })
            .collect();
        let metrics = attack_metrics(&records, 0.5).unwrap();
        assert!((metrics.attack_success_rate - 0.4).abs() < 1e-12);
    }

    #[test]
    fn empty_records_and_empty_lexicons_are_errors() {
        assert!(matches!(attack_metrics(&[], 0.5), Err(HarnessError::NothingAttacked)));
        let resources = AttackResources::new(HashMap::new());
        assert!(matches!(resources.validate(), Err(HarnessError::MissingResources(_))));
    }

    #[test]
    fn resource_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let syn = dir.path().join("synonyms.txt");
        std::fs::write(&syn, "# lexicon\nchilly cold cool\nwarm hot\n").unwrap();
        let map = load_synonyms(&syn).unwrap();
        assert_eq!(map["chilly"], vec!["cold", "cool"]);

        let pos = dir.path().join("pos.txt");
        std::fs::write(&pos, "chilly ADJ\ncold ADJ\n").unwrap();
        assert_eq!(load_pos_tags(&pos).unwrap()["cold"], "ADJ");

        let vec_path = dir.path().join("vectors.txt");
        std::fs::write(&vec_path, "chilly 1.0 0.0\ncold 0.9 0.1\n").unwrap();
        assert_eq!(load_word_vectors(&vec_path).unwrap().len(), 2);

        std::fs::write(&syn, "lonely\n").unwrap();
        assert!(matches!(load_synonyms(&syn), Err(HarnessError::BadResource { .. })));
        std::fs::write(&vec_path, "chilly 1.0 0.0\ncold 0.9\n").unwrap();
        assert!(matches!(load_word_vectors(&vec_path), Err(HarnessError::BadResource { .. })));
    }

    #[test]
    fn word_vector_filter_orders_and_prunes() {
        let mut vectors = HashMap::new();
        vectors.insert("chilly".into(), FeatureVector::new(vec![1.0, 0.0]).unwrap());
        vectors.insert("cold".into(), FeatureVector::new(vec![0.8, 0.2]).unwrap());
        vectors.insert("cool".into(), FeatureVector::new(vec![0.99, 0.01]).unwrap());
        vectors.insert("hot".into(), FeatureVector::new(vec![-1.0, 0.0]).unwrap());
        let resources =
            AttackResources::new(lexicon(&[("chilly", &["cold", "cool", "hot", "unknown"])]))
                .with_word_vectors(vectors);
        // "hot" points away, "unknown" has no vector; "cool" outranks "cold"
        assert_eq!(resources.candidates("chilly"), vec!["cool", "cold"]);
    }
}
