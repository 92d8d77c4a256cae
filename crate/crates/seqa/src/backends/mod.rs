//! Model backend abstractions: answer generation, sentence encoding, and
//! token scoring.
//!
//! Every backend call is a pure function of (fingerprint, inputs, params,
//! seed) — that contract is what makes the persistent cache transparent and
//! runs replayable. Samples are addressed by index so the i-th continuation
//! for a prompt never depends on how many samples the caller asked for;
//! a K = 100 run's voters are exactly the first 100 of a K = 500 run's.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::voting::FeatureVector;

pub mod cache;
pub mod remote;
pub mod stub;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("prompt must not be empty")]
    EmptyPrompt,
    #[error("text to encode must not be empty")]
    EmptyText,
    #[error("continuation must contain at least one token")]
    EmptyContinuation,
    #[error("masked target index {index} out of range for {count} tokens")]
    MaskIndexOutOfRange { index: usize, count: usize },
    #[error("sequence of {needed} tokens exceeds the backend context window of {window}")]
    ContextOverflow { needed: usize, window: usize },
    #[error("invalid generation params: {0}")]
    InvalidParams(String),
    #[error("generation produced no usable samples after {attempts} attempts")]
    DegenerateGeneration { attempts: usize },
    #[error("backend produced a malformed feature vector: {0}")]
    BadFeature(#[from] crate::voting::VotingError),
    #[error("remote backend error: {0}")]
    Remote(String),
    #[error("cache I/O failure: {0}")]
    Cache(#[from] std::io::Error),
}

/// Sampling controls for voter generation.
///
/// `sample_count` is how many voters the caller wants; it deliberately does
/// not participate in per-sample determinism (see [`CausalGenerator::sample`])
/// or cache keys, so sweeps over K share work. The generator's own softmax
/// temperature is fixed at 1.0 and is not a field here — the voting
/// temperature lives in the weight function and conflating the two is a
/// known source of confusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub nucleus_p: f64,
    pub max_new_tokens: usize,
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            nucleus_p: 0.9,
            max_new_tokens: 30,
            sample_count: 500,
            seed: 0,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(BackendError::InvalidParams(format!(
                "nucleus_p must lie in (0, 1], got {}",
                self.nucleus_p
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidParams(
                "max_new_tokens must be >= 1".into(),
            ));
        }
        if self.sample_count == 0 {
            return Err(BackendError::InvalidParams(
                "sample_count must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// The fields that identify a sample stream: everything except
    /// `sample_count`. Used in cache keys so K-sweeps share entries.
    pub fn stream_key(&self) -> String {
        format!(
            "p={};max_new={};seed={}",
            self.nucleus_p, self.max_new_tokens, self.seed
        )
    }
}

/// Identity of a backend: what model, which version, which tokenizer.
///
/// Participates in every cache key and is recorded in run manifests, so two
/// processes talking to different models can never share cached values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackendFingerprint {
    pub kind: String,
    pub model: String,
    pub version: String,
    pub tokenizer: String,
}

impl BackendFingerprint {
    pub fn new(
        kind: impl Into<String>,
        model: impl Into<String>,
        version: impl Into<String>,
        tokenizer: impl Into<String>,
    ) -> Self {
        Self {
            kind: kind.into(),
            model: model.into(),
            version: version.into(),
            tokenizer: tokenizer.into(),
        }
    }

    /// Stable single-string form used inside cache keys.
    pub fn key(&self) -> String {
        format!("{}/{}/{}/{}", self.kind, self.model, self.version, self.tokenizer)
    }
}

impl std::fmt::Display for BackendFingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.key())
    }
}

/// Per-token log-probabilities of a continuation under a causal LM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    tokens: Vec<String>,
    logprobs: Vec<f64>,
}

impl TokenLogProbs {
    pub fn new(tokens: Vec<String>, logprobs: Vec<f64>) -> Result<Self, BackendError> {
        if tokens.is_empty() {
            return Err(BackendError::EmptyContinuation);
        }
        if tokens.len() != logprobs.len() {
            return Err(BackendError::InvalidParams(format!(
                "token/logprob length mismatch: {} vs {}",
                tokens.len(),
                logprobs.len()
            )));
        }
        if logprobs.iter().any(|lp| !lp.is_finite() || *lp > 0.0) {
            return Err(BackendError::InvalidParams(
                "logprobs must be finite and <= 0".into(),
            ));
        }
        Ok(Self { tokens, logprobs })
    }

    pub fn count(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    /// Mean token log-probability — the length-normalized log score.
    pub fn mean(&self) -> f64 {
        self.logprobs.iter().sum::<f64>() / self.logprobs.len() as f64
    }

    /// Joint log-probability (sum over the chain rule factors).
    pub fn joint(&self) -> f64 {
        self.logprobs.iter().sum()
    }
}

/// Open-ended continuation sampler (the voter generator).
pub trait CausalGenerator: Send + Sync {
    /// The `index`-th sampled continuation for this prompt. Must depend only
    /// on (fingerprint, prompt, nucleus_p, max_new_tokens, seed, index) —
    /// never on `sample_count` — so sample streams are extendable.
    fn sample(
        &self,
        prompt: &str,
        params: &GenerationParams,
        index: usize,
    ) -> Result<String, BackendError>;

    /// Samples for `start..start + count`, in index order. The default maps
    /// [`Self::sample`]; batching implementations override it.
    fn sample_block(
        &self,
        prompt: &str,
        params: &GenerationParams,
        start: usize,
        count: usize,
    ) -> Result<Vec<String>, BackendError> {
        (start..start + count)
            .map(|i| self.sample(prompt, params, i))
            .collect()
    }

    fn fingerprint(&self) -> BackendFingerprint;
}

/// Sentence feature extractor.
pub trait SentenceEncoder: Send + Sync {
    fn encode(&self, text: &str) -> Result<FeatureVector, BackendError>;

    fn fingerprint(&self) -> BackendFingerprint;
}

/// Left-to-right token scorer for continuation likelihoods.
pub trait CausalScorer: Send + Sync {
    /// Log P(token | prompt, preceding continuation tokens) for every token
    /// of `continuation`. An empty prompt means the backend's
    /// begin-of-sequence convention is the sole context.
    fn token_logprobs(&self, prompt: &str, continuation: &str)
        -> Result<TokenLogProbs, BackendError>;

    fn fingerprint(&self) -> BackendFingerprint;
}

/// Bidirectional masked-token scorer for pseudo-likelihoods.
pub trait MaskedScorer: Send + Sync {
    /// Log-probability of the true token at `target_index` (a position in
    /// the backend's tokenization of `context`) given all other tokens.
    fn masked_logprob(&self, context: &str, target_index: usize) -> Result<f64, BackendError>;

    /// Number of tokens `text` occupies under this backend's tokenizer.
    fn token_count(&self, text: &str) -> Result<usize, BackendError>;

    fn fingerprint(&self) -> BackendFingerprint;
}

/// Cut a raw continuation at its first sentence terminator and trim.
///
/// Keeps the terminator itself; a voter should read as one complete
/// answer-length sentence.
pub fn truncate_at_sentence_end(raw: &str) -> String {
    match raw.find(['.', '!', '?']) {
        Some(pos) => raw[..pos + 1].trim().to_string(),
        None => raw.trim().to_string(),
    }
}

/// Sample `params.sample_count` voters for a prompt.
///
/// Each continuation is truncated at its first sentence terminator.
/// Empty/whitespace-only continuations are skipped and replaced by further
/// samples from the same index stream, up to a total attempt budget of
/// 3 × sample_count; if the budget runs out with at least one usable voter
/// the set shrinks with a warning, and with none it is an error. Because
/// kept voters are the first usable entries of a deterministic index
/// stream, the result for a smaller sample_count is always a prefix of the
/// result for a larger one.
pub fn generate_voters(
    prompt: &str,
    params: &GenerationParams,
    backend: &dyn CausalGenerator,
) -> Result<Vec<String>, BackendError> {
    if prompt.trim().is_empty() {
        return Err(BackendError::EmptyPrompt);
    }
    params.validate()?;
    let want = params.sample_count;
    let budget = want.saturating_mul(3);
    let mut voters = Vec::with_capacity(want);
    let mut next_index = 0usize;
    while voters.len() < want && next_index < budget {
        let remaining = (want - voters.len()).min(budget - next_index);
        let block = backend.sample_block(prompt, params, next_index, remaining)?;
        next_index += block.len();
        for raw in block {
            let cut = truncate_at_sentence_end(&raw);
            if !cut.is_empty() {
                voters.push(cut);
            }
        }
    }
    if voters.is_empty() {
        return Err(BackendError::DegenerateGeneration { attempts: next_index });
    }
    if voters.len() < want {
        log::warn!(
            "voter set shrank to {} of {} requested after {} attempts",
            voters.len(),
            want,
            next_index
        );
    }
    Ok(voters)
}

/// Encode a batch of texts, order-preserving.
pub fn embed(texts: &[String], backend: &dyn SentenceEncoder) -> Result<Vec<FeatureVector>, BackendError> {
    if texts.is_empty() {
        return Err(BackendError::EmptyText);
    }
    texts.iter().map(|t| backend.encode(t)).collect()
}
