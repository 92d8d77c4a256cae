//! LM-score baselines: length-normalized choice likelihood, masked
//! pseudo-likelihood of the question, and their mutual-information
//! combination.
//!
//! All arithmetic stays in natural-log space — per-token probability
//! products underflow quickly at realistic lengths — and every score is
//! normalized by its own token count, so ranking by these scores equals
//! ranking by geometric-mean probabilities. Nothing here samples: all three
//! baselines are deterministic functions of their backend.

use crate::backends::{BackendError, CausalScorer, MaskedScorer};

/// Mean token log-probability of `choice` as a continuation of
/// `question_prompt`: the length-normalized log P(A|Q).
pub fn pro_a_score(
    question_prompt: &str,
    choice: &str,
    scorer: &dyn CausalScorer,
) -> Result<f64, BackendError> {
    if choice.trim().is_empty() {
        return Err(BackendError::EmptyContinuation);
    }
    Ok(scorer.token_logprobs(question_prompt, choice)?.mean())
}

/// Mean token log-probability of `choice` with no conditioning beyond the
/// backend's begin-of-sequence convention: the length-normalized log P(A).
pub fn unconditional_score(choice: &str, scorer: &dyn CausalScorer) -> Result<f64, BackendError> {
    if choice.trim().is_empty() {
        return Err(BackendError::EmptyContinuation);
    }
    Ok(scorer.token_logprobs("", choice)?.mean())
}

/// Length-normalized pointwise mutual information
/// log P(A|Q) − log P(A), both sides per-token means.
///
/// Positive values mean the question raises the choice's likelihood.
pub fn mi_qa_score(
    question_prompt: &str,
    choice: &str,
    scorer: &dyn CausalScorer,
) -> Result<f64, BackendError> {
    Ok(pro_a_score(question_prompt, choice, scorer)? - unconditional_score(choice, scorer)?)
}

/// Mean masked-token log-probability of the question given the choice:
/// the pseudo-log-likelihood (1/|Q|) Σᵢ log P(Qᵢ | Q₋ᵢ, A).
///
/// `question` is the full question-side text (context included when the
/// dataset has one); the scored context is `question` followed by `choice`,
/// and only question-side token positions are masked, one at a time.
pub fn pro_q_score(
    question: &str,
    choice: &str,
    scorer: &dyn MaskedScorer,
) -> Result<f64, BackendError> {
    let question = question.trim();
    let choice = choice.trim();
    if question.is_empty() {
        return Err(BackendError::EmptyPrompt);
    }
    let question_tokens = scorer.token_count(question)?;
    if question_tokens == 0 {
        return Err(BackendError::EmptyPrompt);
    }
    let full = if choice.is_empty() {
        question.to_string()
    } else {
        format!("{question} {choice}")
    };
    let mut total = 0.0;
    for i in 0..question_tokens {
        total += scorer.masked_logprob(&full, i)?;
    }
    Ok(total / question_tokens as f64)
}
