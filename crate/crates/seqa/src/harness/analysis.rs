//! Post-hoc analyses over evaluation verdicts: accuracy by gold-choice
//! length and the cumulative distribution of per-voter weight gaps.

use serde::{Deserialize, Serialize};

use super::{EvalVerdict, HarnessError};

/// Inclusive word-count bins used for the length breakdown.
pub const DEFAULT_LENGTH_BINS: [(usize, usize); 4] = [(1, 5), (6, 10), (11, 15), (16, 20)];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketAccuracy {
    pub min_words: usize,
    pub max_words: usize,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LengthBucketReport {
    /// Only nonempty bins appear; an empty bin is absent, not zero.
    pub buckets: Vec<BucketAccuracy>,
    pub overall_total: usize,
    pub overall_correct: usize,
    pub overall_accuracy: f64,
}

/// Break accuracy down by the word count of the gold choice.
///
/// The overall row covers every verdict, including those outside all bins.
pub fn length_bucket_report(
    verdicts: &[EvalVerdict],
    bins: &[(usize, usize)],
) -> Result<LengthBucketReport, HarnessError> {
    if verdicts.is_empty() {
        return Err(HarnessError::NoExamples);
    }
    let mut buckets = Vec::new();
    for &(lo, hi) in bins {
        let in_bin: Vec<&EvalVerdict> = verdicts
            .iter()
            .filter(|v| (lo..=hi).contains(&v.gold_word_count))
            .collect();
        if in_bin.is_empty() {
            continue;
        }
        let correct = in_bin.iter().filter(|v| v.correct).count();
        buckets.push(BucketAccuracy {
            min_words: lo,
            max_words: hi,
            total: in_bin.len(),
            correct,
            accuracy: correct as f64 / in_bin.len() as f64,
        });
    }
    let overall_correct = verdicts.iter().filter(|v| v.correct).count();
    Ok(LengthBucketReport {
        buckets,
        overall_total: verdicts.len(),
        overall_correct,
        overall_accuracy: overall_correct as f64 / verdicts.len() as f64,
    })
}

/// Cumulative weight-gap curves: at each δ, the percentage of voters whose
/// weight for the gold choice exceeds their weight for the strongest wrong
/// choice by at least δ (and symmetrically for wrong-favoring voters).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightCdf {
    pub deltas: Vec<f64>,
    /// Percentage of voters with (gold weight − wrong weight) ≥ δ,
    /// averaged per instance then across instances.
    pub favor_correct_pct: Vec<f64>,
    /// Percentage with a strictly negative gap of magnitude ≥ δ.
    pub favor_wrong_pct: Vec<f64>,
    pub instances: usize,
    /// Instances with more than two choices, where the comparison was
    /// restricted to gold vs the strongest wrong choice.
    pub restricted_multiway: usize,
}

impl WeightCdf {
    /// Percentage of voters in neither bucket at each δ.
    pub fn favor_neither_pct(&self) -> Vec<f64> {
        self.favor_correct_pct
            .iter()
            .zip(&self.favor_wrong_pct)
            .map(|(c, w)| 100.0 - c - w)
            .collect()
    }

    /// Trapezoidal area between the two curves, rescaled from percentages.
    /// Approximates the mean per-instance score gap between the gold and
    /// strongest-wrong choices.
    pub fn between_curve_area(&self) -> f64 {
        let mut area = 0.0;
        for i in 1..self.deltas.len() {
            let gap_lo = self.favor_correct_pct[i - 1] - self.favor_wrong_pct[i - 1];
            let gap_hi = self.favor_correct_pct[i] - self.favor_wrong_pct[i];
            area += 0.5 * (gap_lo + gap_hi) * (self.deltas[i] - self.deltas[i - 1]);
        }
        area / 100.0
    }
}

/// Evenly spaced δ grid over the full weight-gap range [0, 1].
pub fn default_delta_grid(points: usize) -> Vec<f64> {
    assert!(points >= 2, "a grid needs at least two points");
    (0..points).map(|j| j as f64 / (points - 1) as f64).collect()
}

/// Build the weight-gap CDF from verdicts whose scorer retained the
/// per-voter weight matrix. Verdicts without a matrix are ignored; if none
/// carry one, that is an error rather than an empty curve.
pub fn weight_cdf(verdicts: &[EvalVerdict], deltas: &[f64]) -> Result<WeightCdf, HarnessError> {
    if deltas.is_empty()
        || deltas.iter().any(|d| !d.is_finite())
        || deltas.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(HarnessError::BadDeltaGrid);
    }
    let mut correct_sum = vec![0.0; deltas.len()];
    let mut wrong_sum = vec![0.0; deltas.len()];
    let mut instances = 0usize;
    let mut restricted = 0usize;

    for verdict in verdicts {
        let Some(semantic) = &verdict.semantic else { continue };
        let Some(weights) = &semantic.weights else { continue };
        if weights.is_empty() {
            continue;
        }
        let gold = verdict.gold;
        let wrong = strongest_wrong(&verdict.scores, gold);
        if verdict.scores.len() > 2 {
            restricted += 1;
        }
        let k = weights.len() as f64;
        let gaps: Vec<f64> = weights.iter().map(|row| row[gold] - row[wrong]).collect();
        for (j, &delta) in deltas.iter().enumerate() {
            let favor_correct = gaps.iter().filter(|&&g| g >= delta).count();
            let favor_wrong = gaps.iter().filter(|&&g| g < 0.0 && -g >= delta).count();
            correct_sum[j] += 100.0 * favor_correct as f64 / k;
            wrong_sum[j] += 100.0 * favor_wrong as f64 / k;
        }
        instances += 1;
    }
    if instances == 0 {
        return Err(HarnessError::NoWeightMatrices);
    }
    let n = instances as f64;
    Ok(WeightCdf {
        deltas: deltas.to_vec(),
        favor_correct_pct: correct_sum.into_iter().map(|s| s / n).collect(),
        favor_wrong_pct: wrong_sum.into_iter().map(|s| s / n).collect(),
        instances,
        restricted_multiway: restricted,
    })
}

fn strongest_wrong(scores: &[f64], gold: usize) -> usize {
    let mut best = usize::MAX;
    for (j, &s) in scores.iter().enumerate() {
        if j == gold {
            continue;
        }
        if best == usize::MAX || s > scores[best] {
            best = j;
        }
    }
    best
}
