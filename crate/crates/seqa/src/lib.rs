//! seqa — unsupervised multiple-choice commonsense QA.
//!
//! The core idea: instead of scoring each answer choice directly with a
//! language model, sample many plausible free-form answers to the question
//! (the *voters*), embed them and the choices into a sentence feature space,
//! and score each choice by the mean semantic-similarity vote it receives.
//! LM-probability baselines (choice likelihood, masked question
//! pseudo-likelihood, and their mutual-information combination) are included
//! for comparison, along with a robustness harness: synonym-substitution
//! attacks, paraphrase rank-consistency, answer-length buckets, and voting
//! weight distribution curves.

pub mod backends;
pub mod baselines;
pub mod datasets;
pub mod harness;
pub mod run;
pub mod scorer;
pub mod voting;
