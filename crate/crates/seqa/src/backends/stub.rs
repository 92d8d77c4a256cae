//! Deterministic stub backends with closed-form behavior.
//!
//! Every stub is hand-computable: a cycling generator returns a fixed
//! sentence list by index, the hashing encoder is an exact bag-of-words,
//! and the token scorers expose their per-token distributions directly.
//! Pipeline results over stubs can therefore be verified against
//! independent arithmetic, which is what the oracle test suites do.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backends::{
    BackendError, BackendFingerprint, CausalGenerator, CausalScorer, GenerationParams,
    MaskedScorer, SentenceEncoder, TokenLogProbs,
};
use crate::voting::FeatureVector;

/// Stable 64-bit FNV-1a. Stubs must hash identically across processes and
/// releases, which `DefaultHasher` does not guarantee.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn ws_tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Cycles a fixed sentence list by sample index, ignoring prompt and seed.
#[derive(Debug, Clone)]
pub struct CyclingGenerator {
    name: String,
    sentences: Vec<String>,
}

impl CyclingGenerator {
    pub fn new(name: impl Into<String>, sentences: Vec<String>) -> Self {
        assert!(!sentences.is_empty(), "cycling generator needs sentences");
        Self { name: name.into(), sentences }
    }
}

impl CausalGenerator for CyclingGenerator {
    fn sample(
        &self,
        _prompt: &str,
        _params: &GenerationParams,
        index: usize,
    ) -> Result<String, BackendError> {
        Ok(self.sentences[index % self.sentences.len()].clone())
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint::new("stub-generator", format!("cycling-{}", self.name), "1", "whitespace")
    }
}

/// Cycles a per-prompt sentence list, falling back to a default list for
/// prompts without an entry. Lets tests give each question its own voters.
#[derive(Debug, Clone, Default)]
pub struct PromptKeyedGenerator {
    name: String,
    by_prompt: BTreeMap<String, Vec<String>>,
    default: Vec<String>,
}

impl PromptKeyedGenerator {
    pub fn new(name: impl Into<String>, default: Vec<String>) -> Self {
        Self { name: name.into(), by_prompt: BTreeMap::new(), default }
    }

    pub fn with_prompt(mut self, prompt: impl Into<String>, sentences: Vec<String>) -> Self {
        self.by_prompt.insert(prompt.into(), sentences);
        self
    }
}

impl CausalGenerator for PromptKeyedGenerator {
    fn sample(
        &self,
        prompt: &str,
        _params: &GenerationParams,
        index: usize,
    ) -> Result<String, BackendError> {
        let list = self.by_prompt.get(prompt).unwrap_or(&self.default);
        if list.is_empty() {
            return Ok(String::new());
        }
        Ok(list[index % list.len()].clone())
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint::new(
            "stub-generator",
            format!("prompt-keyed-{}", self.name),
            "1",
            "whitespace",
        )
    }
}

/// Samples word sequences from a pool with a per-index RNG stream.
///
/// The stream for sample `i` is seeded by (fingerprint, prompt, seed, i), so
/// each index is independent of how many samples are drawn, and changing the
/// seed changes every sample. `nucleus_p` truncates the pool to its first
/// ⌈p·N⌉ entries, mimicking top-p mass truncation over a ranked vocabulary.
#[derive(Debug, Clone)]
pub struct SeededPoolGenerator {
    name: String,
    pool: Vec<String>,
    words_per_sample: usize,
}

impl SeededPoolGenerator {
    pub fn new(name: impl Into<String>, pool: Vec<String>, words_per_sample: usize) -> Self {
        assert!(!pool.is_empty(), "pool generator needs words");
        assert!(words_per_sample >= 1);
        Self { name: name.into(), pool, words_per_sample }
    }
}

impl CausalGenerator for SeededPoolGenerator {
    fn sample(
        &self,
        prompt: &str,
        params: &GenerationParams,
        index: usize,
    ) -> Result<String, BackendError> {
        let key = format!(
            "{}|{}|{}|{}|{}",
            self.fingerprint().key(),
            prompt,
            params.nucleus_p,
            params.seed,
            index
        );
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(key.as_bytes()));
        let kept = ((params.nucleus_p * self.pool.len() as f64).ceil() as usize)
            .clamp(1, self.pool.len());
        let head = &self.pool[..kept];
        let words: Vec<&str> = (0..self.words_per_sample.min(params.max_new_tokens))
            .map(|_| head.choose(&mut rng).expect("nonempty pool").as_str())
            .collect();
        Ok(format!("{}.", words.join(" ")))
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint::new("stub-generator", format!("pool-{}", self.name), "1", "whitespace")
    }
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

/// Bag-of-words encoder hashing each word into one of `dim` buckets.
///
/// Words are lowercased alphanumeric runs; configured stopwords are dropped
/// before counting, so texts differing only in stopwords encode identically.
/// Texts with the same word multiset get bit-identical vectors (hence cosine
/// exactly 1), and texts over disjoint vocabularies get cosine 0 unless
/// buckets collide.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    name: String,
    dim: usize,
    stopwords: BTreeSet<String>,
}

impl HashingEncoder {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        assert!(dim >= 1, "encoder dimension must be positive");
        Self { name: name.into(), dim, stopwords: BTreeSet::new() }
    }

    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stopwords = words.into_iter().map(|w| w.into().to_lowercase()).collect();
        self
    }

    fn words(&self, text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .filter(|w| !self.stopwords.contains(*w))
            .map(str::to_string)
            .collect()
    }
}

impl SentenceEncoder for HashingEncoder {
    fn encode(&self, text: &str) -> Result<FeatureVector, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::EmptyText);
        }
        let mut buckets = vec![0.0f64; self.dim];
        let words = self.words(text);
        if words.is_empty() {
            // punctuation-only input: hash the raw text so the norm stays positive
            buckets[(fnv1a64(text.trim().as_bytes()) % self.dim as u64) as usize] += 1.0;
        } else {
            for w in words {
                buckets[(fnv1a64(w.as_bytes()) % self.dim as u64) as usize] += 1.0;
            }
        }
        Ok(FeatureVector::new(buckets)?)
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint::new(
            "stub-encoder",
            format!("hashing-{}-d{}", self.name, self.dim),
            "1",
            "lowercase-alnum",
        )
    }
}

// ---------------------------------------------------------------------------
// Causal token scorers
// ---------------------------------------------------------------------------

/// Uniform next-token distribution over a fixed vocabulary size: every token
/// scores −ln V regardless of context.
#[derive(Debug, Clone)]
pub struct UniformScorer {
    name: String,
    vocab_size: usize,
    context_window: usize,
}

impl UniformScorer {
    pub fn new(name: impl Into<String>, vocab_size: usize) -> Self {
        assert!(vocab_size >= 2);
        Self { name: name.into(), vocab_size, context_window: usize::MAX }
    }

    pub fn with_context_window(mut self, window: usize) -> Self {
        self.context_window = window;
        self
    }
}

impl CausalScorer for UniformScorer {
    fn token_logprobs(&self, prompt: &str, continuation: &str) -> Result<TokenLogProbs, BackendError> {
        let cont: Vec<String> = ws_tokens(continuation).iter().map(|t| t.to_string()).collect();
        if cont.is_empty() {
            return Err(BackendError::EmptyContinuation);
        }
        let needed = ws_tokens(prompt).len() + cont.len();
        if needed > self.context_window {
            return Err(BackendError::ContextOverflow { needed, window: self.context_window });
        }
        let lp = -(self.vocab_size as f64).ln();
        let logprobs = vec![lp; cont.len()];
        TokenLogProbs::new(cont, logprobs)
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint::new(
            "stub-causal-scorer",
            format!("uniform-{}-v{}", self.name, self.vocab_size),
            "1",
            "whitespace",
        )
    }
}

/// Word-table unigram scorer with optional position decay.
///
/// Token `w` at continuation position `t` (0-based) scores
/// `ln P(w) − decay·t`, where `P(w)` comes from the table (or the default).
/// With decay = 0 this is a pure unigram model whose joint probability is
/// the product of table entries; with decay > 0 the mean log-probability
/// strictly decreases with continuation length, giving tests a controllable
/// length-biased likelihood.
#[derive(Debug, Clone)]
pub struct WordTableScorer {
    name: String,
    table: HashMap<String, f64>,
    default_prob: f64,
    position_decay: f64,
    /// extra log-prob penalty applied while the prompt is empty, so
    /// unconditional scores can differ from conditional ones
    unconditional_penalty: f64,
}

impl WordTableScorer {
    pub fn new(name: impl Into<String>, default_prob: f64) -> Self {
        assert!(default_prob > 0.0 && default_prob <= 1.0);
        Self {
            name: name.into(),
            table: HashMap::new(),
            default_prob,
            position_decay: 0.0,
            unconditional_penalty: 0.0,
        }
    }

    pub fn with_word(mut self, word: impl Into<String>, prob: f64) -> Self {
        assert!(prob > 0.0 && prob <= 1.0);
        self.table.insert(word.into(), prob);
        self
    }

    pub fn with_position_decay(mut self, decay: f64) -> Self {
        assert!(decay >= 0.0 && decay.is_finite());
        self.position_decay = decay;
        self
    }

    pub fn with_unconditional_penalty(mut self, penalty: f64) -> Self {
        assert!(penalty >= 0.0 && penalty.is_finite());
        self.unconditional_penalty = penalty;
        self
    }
}

impl CausalScorer for WordTableScorer {
    fn token_logprobs(&self, prompt: &str, continuation: &str) -> Result<TokenLogProbs, BackendError> {
        let cont: Vec<String> = ws_tokens(continuation).iter().map(|t| t.to_string()).collect();
        if cont.is_empty() {
            return Err(BackendError::EmptyContinuation);
        }
        let penalty = if prompt.trim().is_empty() { self.unconditional_penalty } else { 0.0 };
        let logprobs = cont
            .iter()
            .enumerate()
            .map(|(t, w)| {
                self.table.get(w).copied().unwrap_or(self.default_prob).ln()
                    - self.position_decay * t as f64
                    - penalty
            })
            .collect();
        TokenLogProbs::new(cont, logprobs)
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint::new(
            "stub-causal-scorer",
            format!("word-table-{}", self.name),
            "1",
            "whitespace",
        )
    }
}

// ---------------------------------------------------------------------------
// Masked token scorers
// ---------------------------------------------------------------------------

/// Every masked position scores ln p, independent of content and position.
#[derive(Debug, Clone)]
pub struct ConstantMaskScorer {
    name: String,
    prob: f64,
}

impl ConstantMaskScorer {
    pub fn new(name: impl Into<String>, prob: f64) -> Self {
        assert!(prob > 0.0 && prob <= 1.0);
        Self { name: name.into(), prob }
    }
}

impl MaskedScorer for ConstantMaskScorer {
    fn masked_logprob(&self, context: &str, target_index: usize) -> Result<f64, BackendError> {
        let count = ws_tokens(context).len();
        if target_index >= count {
            return Err(BackendError::MaskIndexOutOfRange { index: target_index, count });
        }
        Ok(self.prob.ln())
    }

    fn token_count(&self, text: &str) -> Result<usize, BackendError> {
        Ok(ws_tokens(text).len())
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint::new(
            "stub-masked-scorer",
            format!("constant-{}-p{}", self.name, self.prob),
            "1",
            "whitespace",
        )
    }
}

/// Masked positions score from a fixed per-index table, for hand-computed
/// pseudo-likelihood oracles.
#[derive(Debug, Clone)]
pub struct IndexMaskScorer {
    name: String,
    logprobs_by_index: Vec<f64>,
}

impl IndexMaskScorer {
    pub fn new(name: impl Into<String>, logprobs_by_index: Vec<f64>) -> Self {
        assert!(
            logprobs_by_index.iter().all(|lp| lp.is_finite() && *lp <= 0.0),
            "masked logprobs must be finite and <= 0"
        );
        Self { name: name.into(), logprobs_by_index }
    }
}

impl MaskedScorer for IndexMaskScorer {
    fn masked_logprob(&self, context: &str, target_index: usize) -> Result<f64, BackendError> {
        let count = ws_tokens(context).len();
        if target_index >= count || target_index >= self.logprobs_by_index.len() {
            return Err(BackendError::MaskIndexOutOfRange {
                index: target_index,
                count: count.min(self.logprobs_by_index.len()),
            });
        }
        Ok(self.logprobs_by_index[target_index])
    }

    fn token_count(&self, text: &str) -> Result<usize, BackendError> {
        Ok(ws_tokens(text).len())
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint::new(
            "stub-masked-scorer",
            format!("indexed-{}", self.name),
            "1",
            "whitespace",
        )
    }
}

/// Masked position `i` scores −step·(i + 1): position-sensitive but content-blind.
#[derive(Debug, Clone)]
pub struct PositionMaskScorer {
    name: String,
    step: f64,
}

impl PositionMaskScorer {
    pub fn new(name: impl Into<String>, step: f64) -> Self {
        assert!(step > 0.0 && step.is_finite());
        Self { name: name.into(), step }
    }
}

impl MaskedScorer for PositionMaskScorer {
    fn masked_logprob(&self, context: &str, target_index: usize) -> Result<f64, BackendError> {
        let count = ws_tokens(context).len();
        if target_index >= count {
            return Err(BackendError::MaskIndexOutOfRange { index: target_index, count });
        }
        Ok(-self.step * (target_index + 1) as f64)
    }

    fn token_count(&self, text: &str) -> Result<usize, BackendError> {
        Ok(ws_tokens(text).len())
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint::new(
            "stub-masked-scorer",
            format!("position-{}-s{}", self.name, self.step),
            "1",
            "whitespace",
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voting::cosine;

    #[test]
    fn cycling_generator_is_index_addressed() {
        let g = CyclingGenerator::new("t", vec!["A.".into(), "B.".into(), "C.".into()]);
        let p = GenerationParams::default();
        assert_eq!(g.sample("x", &p, 0).unwrap(), "A.");
        assert_eq!(g.sample("x", &p, 4).unwrap(), "B.");
        assert_eq!(g.sample("y", &p, 4).unwrap(), "B."); // prompt-blind
    }

    #[test]
    fn prompt_keyed_generator_routes_by_prompt() {
        let g = PromptKeyedGenerator::new("t", vec!["Default.".into()])
            .with_prompt("q1", vec!["One.".into(), "Two.".into()]);
        let p = GenerationParams::default();
        assert_eq!(g.sample("q1", &p, 1).unwrap(), "Two.");
        assert_eq!(g.sample("other", &p, 5).unwrap(), "Default.");
    }

    #[test]
    fn pool_generator_seed_and_index_determinism() {
        let pool: Vec<String> = ["red", "green", "blue", "amber", "teal", "plum"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let g = SeededPoolGenerator::new("t", pool, 4);
        let p = GenerationParams { seed: 11, ..Default::default() };
        let a = g.sample("prompt", &p, 3).unwrap();
        let b = g.sample("prompt", &p, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.ends_with('.'));

        // sample i does not depend on how many other samples exist
        let c = g.sample("prompt", &p, 0).unwrap();
        assert_eq!(c, g.sample("prompt", &p, 0).unwrap());

        let other_seed = GenerationParams { seed: 12, ..Default::default() };
        let differing = (0..20).any(|i| {
            g.sample("prompt", &p, i).unwrap() != g.sample("prompt", &other_seed, i).unwrap()
        });
        assert!(differing, "seed change should alter the sample stream");
    }

    #[test]
    fn pool_generator_nucleus_truncation() {
        let pool: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let g = SeededPoolGenerator::new("t", pool, 6);
        let narrow = GenerationParams { nucleus_p: 0.25, ..Default::default() };
        for i in 0..10 {
            let s = g.sample("p", &narrow, i).unwrap();
            assert_eq!(s, "a a a a a a.", "p = 0.25 keeps only the first pool word");
        }
    }

    #[test]
    fn hashing_encoder_bag_of_words() {
        let e = HashingEncoder::new("t", 64);
        let a = e.encode("The cat sat.").unwrap();
        let b = e.encode("sat the CAT").unwrap(); // same multiset, different order/case/punct
        assert_eq!(cosine(&a, &b).unwrap(), 1.0);

        let c = e.encode("dog runs fast").unwrap();
        // disjoint vocabulary: orthogonal unless two words collide in 64 buckets
        assert!(cosine(&a, &c).unwrap() < 0.6);

        assert!(matches!(e.encode("   "), Err(BackendError::EmptyText)));
        let p = e.encode("?!").unwrap();
        assert!(p.norm() > 0.0);
    }

    #[test]
    fn hashing_encoder_stopwords_ignored() {
        let e = HashingEncoder::new("t", 64).with_stopwords(["the", "a", "very"]);
        let bare = e.encode("cat sat on mat").unwrap();
        let padded = e.encode("the cat sat on a very very mat").unwrap();
        assert_eq!(cosine(&bare, &padded).unwrap(), 1.0);
        assert_eq!(bare, padded);
    }

    #[test]
    fn hashing_encoder_batch_independence() {
        let e = HashingEncoder::new("t", 32);
        let alone = e.encode("some words here").unwrap();
        let batch = crate::backends::embed(
            &["other text".into(), "some words here".into()],
            &e,
        )
        .unwrap();
        assert_eq!(batch[1], alone);
    }

    #[test]
    fn uniform_scorer_closed_form() {
        let s = UniformScorer::new("t", 50);
        let lp = s.token_logprobs("a prompt", "three token continuation").unwrap();
        assert_eq!(lp.count(), 3);
        for &v in lp.logprobs() {
            assert!((v + (50f64).ln()).abs() < 1e-12);
        }
        assert!((lp.joint() + 3.0 * (50f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_scorer_context_overflow() {
        let s = UniformScorer::new("t", 50).with_context_window(4);
        assert!(matches!(
            s.token_logprobs("one two three", "four five"),
            Err(BackendError::ContextOverflow { needed: 5, window: 4 })
        ));
    }

    #[test]
    fn word_table_scorer_joint_matches_product() {
        let s = WordTableScorer::new("t", 0.01)
            .with_word("alpha", 0.5)
            .with_word("beta", 0.125);
        let lp = s.token_logprobs("ctx", "alpha beta").unwrap();
        assert!((lp.joint() - (0.5f64 * 0.125).ln()).abs() < 1e-12);
        assert!((lp.mean() - (0.25f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn word_table_position_decay_lowers_long_sequences() {
        let s = WordTableScorer::new("t", 0.5).with_position_decay(0.1);
        let short = s.token_logprobs("p", "w w").unwrap().mean();
        let long = s.token_logprobs("p", "w w w w w w").unwrap().mean();
        assert!(long < short);
    }

    #[test]
    fn word_table_unconditional_penalty() {
        let s = WordTableScorer::new("t", 0.5).with_unconditional_penalty(1.0);
        let conditional = s.token_logprobs("a question", "w").unwrap().mean();
        let unconditional = s.token_logprobs("", "w").unwrap().mean();
        assert!((conditional - unconditional - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_scorers_contract() {
        let c = ConstantMaskScorer::new("t", 0.5);
        assert!((c.masked_logprob("one two three", 1).unwrap() - (0.5f64).ln()).abs() < 1e-12);
        assert_eq!(c.token_count("one two three").unwrap(), 3);
        assert!(matches!(
            c.masked_logprob("one two", 2),
            Err(BackendError::MaskIndexOutOfRange { index: 2, count: 2 })
        ));

        let p = PositionMaskScorer::new("t", 0.1);
        let first = p.masked_logprob("a b c", 0).unwrap();
        let third = p.masked_logprob("a b c", 2).unwrap();
        assert!(first != third);
        assert!((first + 0.1).abs() < 1e-12);
        assert!((third + 0.3).abs() < 1e-12);
    }
}
