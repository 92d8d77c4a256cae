//! Semantic-voting score core: cosine similarity, voting weight functions,
//! and choice ranking.
//!
//! Everything here is pure math over feature vectors — no model calls, no
//! I/O. A choice's semantic score is the mean voting weight it receives from
//! a set of sampled plausible answers (the *voters*), where each weight is a
//! monotone function of the cosine between the voter's and the choice's
//! sentence features. All operations are deterministic and safe to call from
//! any number of threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from the voting core.
#[derive(Debug, Error)]
pub enum VotingError {
    #[error("feature vectors have mismatched dimensions ({left} vs {right})")]
    DimMismatch { left: usize, right: usize },
    #[error("feature vector must not be empty")]
    EmptyVector,
    #[error("feature vector components must be finite")]
    NonFiniteComponent,
    #[error("feature vector must have nonzero finite norm")]
    ZeroNorm,
    #[error("voter set must contain at least one voter")]
    EmptyVoters,
    #[error("voter texts and features differ in length ({texts} vs {features})")]
    VoterLengthMismatch { texts: usize, features: usize },
    #[error("score list must not be empty")]
    EmptyScores,
    #[error("scores must be finite")]
    NonFiniteScore,
    #[error("invalid {kind} parameter {param}: {requirement}")]
    InvalidWeightParam {
        kind: &'static str,
        param: f64,
        requirement: &'static str,
    },
}

// ---------------------------------------------------------------------------
// Feature vectors
// ---------------------------------------------------------------------------

/// A sentence-level semantic feature vector.
///
/// Construction rejects empty vectors, non-finite components, and vectors
/// whose Euclidean norm is zero (or not finite), so every held value is a
/// valid cosine operand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, VotingError> {
        if values.is_empty() {
            return Err(VotingError::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VotingError::NonFiniteComponent);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(VotingError::ZeroNorm);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Euclidean norm; strictly positive by construction.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = VotingError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.values
    }
}

/// Cosine similarity of two feature vectors, clamped to `[-1, 1]` to guard
/// downstream exp/sigmoid domains against `1 + ε` rounding overshoot.
///
/// Computed over pre-normalized components so large inputs cannot overflow;
/// scale-invariant and symmetric up to floating-point rounding.
pub fn cosine(u: &FeatureVector, v: &FeatureVector) -> Result<f64, VotingError> {
    if u.dim() != v.dim() {
        return Err(VotingError::DimMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    if u.values == v.values {
        // rounding in normalize-then-dot would land ε short of 1
        return Ok(1.0);
    }
    let nu = u.norm();
    let nv = v.norm();
    let mut dot = 0.0;
    for (a, b) in u.values.iter().zip(&v.values) {
        dot += (a / nu) * (b / nv);
    }
    Ok(dot.clamp(-1.0, 1.0))
}

// ---------------------------------------------------------------------------
// Weight functions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightFunctionSpec {
    kind: String,
    param: f64,
}

/// A voting weight function ω over the voter/choice cosine.
///
/// All four kinds satisfy the same contract: outputs lie in `[0, 1]`, a
/// cosine of exactly 1 maps to exactly 1 (normalization by the value at 1),
/// and the output is monotone non-decreasing in the cosine. Parameters are
/// validated at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightFunctionSpec", into = "WeightFunctionSpec")]
pub enum WeightFunction {
    /// `exp((cos − 1)/T)`. The subtraction form is algebraically identical to
    /// `exp(cos/T)` normalized by `exp(1/T)` but cannot overflow at small `T`.
    Exp { temperature: f64 },
    /// `1` if `cos > α`, else `0`.
    Indicator { alpha: f64 },
    /// `max(cos − β, 0) / (1 − β)`.
    Relu { beta: f64 },
    /// `sigmoid(cos/T) / sigmoid(1/T)`.
    Sigmoid { temperature: f64 },
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl WeightFunction {
    pub fn exp(temperature: f64) -> Result<Self, VotingError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(VotingError::InvalidWeightParam {
                kind: "exp",
                param: temperature,
                requirement: "temperature must be finite and > 0",
            });
        }
        Ok(Self::Exp { temperature })
    }

    pub fn indicator(alpha: f64) -> Result<Self, VotingError> {
        if !(alpha.is_finite() && (-1.0..1.0).contains(&alpha)) {
            return Err(VotingError::InvalidWeightParam {
                kind: "indicator",
                param: alpha,
                requirement: "alpha must lie in [-1, 1)",
            });
        }
        Ok(Self::Indicator { alpha })
    }

    pub fn relu(beta: f64) -> Result<Self, VotingError> {
        if !(beta.is_finite() && (-1.0..1.0).contains(&beta)) {
            return Err(VotingError::InvalidWeightParam {
                kind: "relu",
                param: beta,
                requirement: "beta must lie in [-1, 1)",
            });
        }
        Ok(Self::Relu { beta })
    }

    pub fn sigmoid(temperature: f64) -> Result<Self, VotingError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(VotingError::InvalidWeightParam {
                kind: "sigmoid",
                param: temperature,
                requirement: "temperature must be finite and > 0",
            });
        }
        Ok(Self::Sigmoid { temperature })
    }

    /// Build from a `(kind, param)` pair, e.g. from a config file.
    pub fn from_kind(kind: &str, param: f64) -> Result<Self, VotingError> {
        match kind {
            "exp" => Self::exp(param),
            "indicator" => Self::indicator(param),
            "relu" => Self::relu(param),
            "sigmoid" => Self::sigmoid(param),
            _ => Err(VotingError::InvalidWeightParam {
                kind: "unknown",
                param,
                requirement: "kind must be one of exp, indicator, relu, sigmoid",
            }),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Exp { .. } => "exp",
            Self::Indicator { .. } => "indicator",
            Self::Relu { .. } => "relu",
            Self::Sigmoid { .. } => "sigmoid",
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            Self::Exp { temperature } | Self::Sigmoid { temperature } => temperature,
            Self::Indicator { alpha } => alpha,
            Self::Relu { beta } => beta,
        }
    }

    /// Voting weight for a cosine value. The input is clamped to `[-1, 1]`
    /// so the `[0, 1]` output range holds unconditionally.
    pub fn evaluate(&self, cos_value: f64) -> f64 {
        let c = cos_value.clamp(-1.0, 1.0);
        match *self {
            Self::Exp { temperature } => ((c - 1.0) / temperature).exp(),
            Self::Indicator { alpha } => {
                if c > alpha {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Relu { beta } => (c - beta).max(0.0) / (1.0 - beta),
            Self::Sigmoid { temperature } => sigmoid(c / temperature) / sigmoid(1.0 / temperature),
        }
    }
}

impl TryFrom<WeightFunctionSpec> for WeightFunction {
    type Error = VotingError;

    fn try_from(spec: WeightFunctionSpec) -> Result<Self, Self::Error> {
        Self::from_kind(&spec.kind, spec.param)
    }
}

impl From<WeightFunction> for WeightFunctionSpec {
    fn from(wf: WeightFunction) -> Self {
        Self {
            kind: wf.kind().to_string(),
            param: wf.param(),
        }
    }
}

/// Hard supporter test: 1 when the cosine equals 1 (within 1e-9), else 0.
///
/// Exact cosine equality is unrealizable in floating point, hence the
/// tolerance. This is the zero-temperature limit of [`WeightFunction::Exp`]
/// and serves as the reference oracle for that limit in tests.
pub fn ideal_indicator(cos_value: f64) -> f64 {
    if (cos_value - 1.0).abs() <= 1e-9 {
        1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Voter sets and verdicts
// ---------------------------------------------------------------------------

/// Sampled plausible answers, with their features, that vote on choices.
///
/// Duplicates are kept: the score is a Monte-Carlo mean, so repeated samples
/// carry their sampling mass.
#[derive(Debug, Clone)]
pub struct VoterSet {
    texts: Vec<String>,
    features: Vec<FeatureVector>,
    question_id: String,
    sampler_fingerprint: String,
}

impl VoterSet {
    pub fn new(
        texts: Vec<String>,
        features: Vec<FeatureVector>,
        question_id: impl Into<String>,
        sampler_fingerprint: impl Into<String>,
    ) -> Result<Self, VotingError> {
        if texts.is_empty() || features.is_empty() {
            return Err(VotingError::EmptyVoters);
        }
        if texts.len() != features.len() {
            return Err(VotingError::VoterLengthMismatch {
                texts: texts.len(),
                features: features.len(),
            });
        }
        let dim = features[0].dim();
        for f in &features {
            if f.dim() != dim {
                return Err(VotingError::DimMismatch {
                    left: dim,
                    right: f.dim(),
                });
            }
        }
        Ok(Self {
            texts,
            features,
            question_id: question_id.into(),
            sampler_fingerprint: sampler_fingerprint.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one voter
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    /// Record of the generation parameters and seed that produced the voters.
    pub fn sampler_fingerprint(&self) -> &str {
        &self.sampler_fingerprint
    }
}

/// Per-choice semantic scores with the selected choice index.
///
/// When `weights` is retained it holds one row per voter and one column per
/// choice; each score is exactly the arithmetic mean of its column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemanticVerdict {
    pub scores: Vec<f64>,
    pub chosen: usize,
    pub weights: Option<Vec<Vec<f64>>>,
    pub weight_fn: WeightFunction,
}

/// Mean voting weight the voters give one choice feature.
///
/// Voters are accumulated in index order so repeated runs produce
/// bit-identical sums; permuting the voters changes the result only by
/// summation rounding (≤ 1e-12 at realistic sample sizes).
pub fn semantic_score(
    choice: &FeatureVector,
    voters: &VoterSet,
    wf: &WeightFunction,
) -> Result<f64, VotingError> {
    let mut acc = 0.0;
    for voter in voters.features() {
        acc += wf.evaluate(cosine(voter, choice)?);
    }
    Ok(acc / voters.len() as f64)
}

/// Score every choice against one voter set and pick the winner.
///
/// `keep_weights` retains the per-voter weight matrix (row = voter,
/// column = choice) for downstream vote-distribution analysis; keeping it
/// does not change any score bit.
pub fn score_choices(
    choices: &[FeatureVector],
    voters: &VoterSet,
    wf: &WeightFunction,
    keep_weights: bool,
) -> Result<SemanticVerdict, VotingError> {
    if choices.is_empty() {
        return Err(VotingError::EmptyScores);
    }
    let k = voters.len();
    let mut matrix = if keep_weights {
        Some(vec![vec![0.0; choices.len()]; k])
    } else {
        None
    };
    let mut scores = Vec::with_capacity(choices.len());
    for (j, choice) in choices.iter().enumerate() {
        let mut acc = 0.0;
        for (i, voter) in voters.features().iter().enumerate() {
            let w = wf.evaluate(cosine(voter, choice)?);
            acc += w;
            if let Some(m) = matrix.as_mut() {
                m[i][j] = w;
            }
        }
        scores.push(acc / k as f64);
    }
    let (chosen, _) = rank_choices(&scores)?;
    Ok(SemanticVerdict {
        scores,
        chosen,
        weights: matrix,
        weight_fn: *wf,
    })
}

/// Rank scores descending; ties break toward the lower original index so the
/// result does not depend on dataset ordering. Returns the winning index and
/// the full ranking permutation.
pub fn rank_choices(scores: &[f64]) -> Result<(usize, Vec<usize>), VotingError> {
    if scores.is_empty() {
        return Err(VotingError::EmptyScores);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(VotingError::NonFiniteScore);
    }
    let mut ranking: Vec<usize> = (0..scores.len()).collect();
    ranking.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores checked finite")
            .then(a.cmp(&b))
    });
    Ok((ranking[0], ranking))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn feature_vector_rejects_bad_inputs() {
        assert!(matches!(
            FeatureVector::new(vec![]),
            Err(VotingError::EmptyVector)
        ));
        assert!(matches!(
            FeatureVector::new(vec![1.0, f64::NAN]),
            Err(VotingError::NonFiniteComponent)
        ));
        assert!(matches!(
            FeatureVector::new(vec![1.0, f64::INFINITY]),
            Err(VotingError::NonFiniteComponent)
        ));
        assert!(matches!(
            FeatureVector::new(vec![0.0, 0.0, 0.0]),
            Err(VotingError::ZeroNorm)
        ));
    }

    #[test]
    fn cosine_identical_directions() {
        let u = fv(&[3.0, 4.0]);
        assert_eq!(cosine(&u, &u).unwrap(), 1.0);
    }

    #[test]
    fn cosine_orthogonal() {
        let u = fv(&[1.0, 0.0]);
        let v = fv(&[0.0, 1.0]);
        assert_eq!(cosine(&u, &v).unwrap(), 0.0);
    }

    #[test]
    fn cosine_hand_computed() {
        // dot = 2 + 2 + 4 = 8, norms 3 * 3 = 9
        let u = fv(&[1.0, 2.0, 2.0]);
        let v = fv(&[2.0, 1.0, 2.0]);
        let c = cosine(&u, &v).unwrap();
        assert!((c - 8.0 / 9.0).abs() < 1e-12, "got {c}");
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let u = fv(&[1.0, 0.0]);
        let v = fv(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            cosine(&u, &v),
            Err(VotingError::DimMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn cosine_scale_invariant() {
        let u = fv(&[0.3, -0.7, 2.0]);
        let v = fv(&[1.1, 0.2, -0.4]);
        let scaled = fv(&[0.3 * 250.0, -0.7 * 250.0, 2.0 * 250.0]);
        let base = cosine(&u, &v).unwrap();
        let with_scale = cosine(&scaled, &v).unwrap();
        assert!((base - with_scale).abs() < 1e-12);
    }

    #[test]
    fn weight_exp_normalized_at_one() {
        let wf = WeightFunction::exp(0.1).unwrap();
        assert_eq!(wf.evaluate(1.0), 1.0);
    }

    #[test]
    fn weight_exp_hand_computed() {
        // (0.8 - 1.0) / 0.1 = -2
        let wf = WeightFunction::exp(0.1).unwrap();
        let w = wf.evaluate(0.8);
        assert!((w - (-2.0f64).exp()).abs() < 1e-15);
        assert!((w - 0.135_335_283_236_612_7).abs() < 1e-12);
    }

    #[test]
    fn weight_indicator_threshold() {
        let wf = WeightFunction::indicator(0.5).unwrap();
        assert_eq!(wf.evaluate(0.49), 0.0);
        assert_eq!(wf.evaluate(0.51), 1.0);
        assert_eq!(wf.evaluate(1.0), 1.0);
    }

    #[test]
    fn weight_relu_hand_computed() {
        let wf = WeightFunction::relu(0.5).unwrap();
        assert!((wf.evaluate(0.75) - 0.5).abs() < 1e-12);
        assert_eq!(wf.evaluate(0.5), 0.0);
        assert_eq!(wf.evaluate(1.0), 1.0);
    }

    #[test]
    fn weight_sigmoid_normalized_at_one() {
        for t in [10.0, 1.0, 0.2, 0.1, 0.05] {
            let wf = WeightFunction::sigmoid(t).unwrap();
            assert_eq!(wf.evaluate(1.0), 1.0, "T = {t}");
        }
    }

    #[test]
    fn weight_params_validated() {
        assert!(WeightFunction::exp(0.0).is_err());
        assert!(WeightFunction::exp(-1.0).is_err());
        assert!(WeightFunction::exp(f64::NAN).is_err());
        assert!(WeightFunction::indicator(1.0).is_err());
        assert!(WeightFunction::indicator(-1.001).is_err());
        assert!(WeightFunction::relu(1.0).is_err());
        assert!(WeightFunction::sigmoid(0.0).is_err());
        assert!(WeightFunction::indicator(-1.0).is_ok());
        assert!(WeightFunction::relu(0.999).is_ok());
    }

    #[test]
    fn weight_exp_indicator_limit() {
        // exp((0.9 - 1) / 1e-3) = exp(-100)
        let wf = WeightFunction::exp(1e-3).unwrap();
        let w = wf.evaluate(0.9);
        assert!(w < 1e-40, "got {w}");
        assert_eq!(ideal_indicator(0.9), 0.0);
        assert_eq!(ideal_indicator(1.0), 1.0);
        assert_eq!(ideal_indicator(0.999), 0.0);
    }

    #[test]
    fn weight_exp_monotone_in_temperature_limit() {
        // for any cos < 1, weight shrinks monotonically as T -> 0
        let cos_value = 0.6;
        let mut prev = f64::INFINITY;
        for t in [1.0, 0.1, 0.01, 0.001] {
            let w = WeightFunction::exp(t).unwrap().evaluate(cos_value);
            assert!(w < prev, "T = {t}: {w} !< {prev}");
            prev = w;
        }
    }

    #[test]
    fn semantic_score_mean_of_weights() {
        // relu beta = 0.5: cosines 0.6 and 0.7 give weights 0.2 and 0.4
        let wf = WeightFunction::relu(0.5).unwrap();
        let choice = fv(&[1.0, 0.0]);
        let v1 = fv(&[0.6, (1.0f64 - 0.36).sqrt()]);
        let v2 = fv(&[0.7, (1.0f64 - 0.49).sqrt()]);
        let voters = VoterSet::new(
            vec!["a".into(), "b".into()],
            vec![v1, v2],
            "q0",
            "stub",
        )
        .unwrap();
        let s = semantic_score(&choice, &voters, &wf).unwrap();
        assert!((s - 0.3).abs() < 1e-12, "got {s}");
    }

    #[test]
    fn semantic_score_identical_voters() {
        let wf = WeightFunction::exp(0.1).unwrap();
        let choice = fv(&[0.2, 0.5, -0.1]);
        let voters = VoterSet::new(
            vec!["a".into(); 7],
            vec![choice.clone(); 7],
            "q0",
            "stub",
        )
        .unwrap();
        assert_eq!(semantic_score(&choice, &voters, &wf).unwrap(), 1.0);
    }

    #[test]
    fn semantic_score_orthogonal_voters() {
        let wf = WeightFunction::exp(1.0).unwrap();
        let choice = fv(&[1.0, 0.0]);
        let voters = VoterSet::new(
            vec!["a".into(); 5],
            vec![fv(&[0.0, 1.0]); 5],
            "q0",
            "stub",
        )
        .unwrap();
        let s = semantic_score(&choice, &voters, &wf).unwrap();
        assert!((s - (-1.0f64).exp()).abs() < 1e-12);
        assert!((s - 0.367_879_441_171_442_33).abs() < 1e-12);
    }

    #[test]
    fn empty_voters_rejected() {
        assert!(matches!(
            VoterSet::new(vec![], vec![], "q", "stub"),
            Err(VotingError::EmptyVoters)
        ));
    }

    #[test]
    fn rank_choices_examples() {
        assert_eq!(rank_choices(&[0.3, 0.7]).unwrap().0, 1);
        assert_eq!(rank_choices(&[0.5, 0.5]).unwrap().0, 0);
        assert_eq!(rank_choices(&[0.1, 0.9, 0.4]).unwrap().1, vec![1, 2, 0]);
        assert!(matches!(
            rank_choices(&[]),
            Err(VotingError::EmptyScores)
        ));
        assert!(matches!(
            rank_choices(&[0.1, f64::NAN]),
            Err(VotingError::NonFiniteScore)
        ));
    }

    #[test]
    fn verdict_scores_equal_weight_column_means() {
        let wf = WeightFunction::exp(0.1).unwrap();
        let choices = vec![fv(&[1.0, 0.0, 0.0]), fv(&[0.0, 1.0, 1.0])];
        let voters = VoterSet::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![fv(&[1.0, 1.0, 0.0]), fv(&[0.5, 0.2, 0.9]), fv(&[1.0, 0.0, 0.1])],
            "q0",
            "stub",
        )
        .unwrap();
        let verdict = score_choices(&choices, &voters, &wf, true).unwrap();
        let matrix = verdict.weights.as_ref().unwrap();
        for j in 0..choices.len() {
            let mut acc = 0.0;
            for row in matrix {
                acc += row[j];
            }
            // exact reconstruction: same accumulation order as the implementation
            assert_eq!(acc / matrix.len() as f64, verdict.scores[j]);
        }
        // dropping the matrix must not change a single bit
        let bare = score_choices(&choices, &voters, &wf, false).unwrap();
        assert_eq!(bare.scores, verdict.scores);
        assert_eq!(bare.chosen, verdict.chosen);
    }

    #[test]
    fn identical_choice_features_identical_scores() {
        let wf = WeightFunction::exp(0.1).unwrap();
        let shared = fv(&[0.4, -0.2, 0.8]);
        let choices = vec![shared.clone(), shared];
        let voters = VoterSet::new(
            vec!["a".into(), "b".into()],
            vec![fv(&[1.0, 0.0, 0.0]), fv(&[0.3, 0.3, 0.4])],
            "q0",
            "stub",
        )
        .unwrap();
        let verdict = score_choices(&choices, &voters, &wf, false).unwrap();
        assert_eq!(verdict.scores[0], verdict.scores[1]);
        assert_eq!(verdict.chosen, 0); // tie breaks to the lower index
    }

    #[test]
    fn weight_function_serde_round_trip() {
        let wf = WeightFunction::exp(0.1).unwrap();
        let json = serde_json::to_string(&wf).unwrap();
        assert_eq!(json, r#"{"kind":"exp","param":0.1}"#);
        let back: WeightFunction = serde_json::from_str(&json).unwrap();
        assert_eq!(back, wf);
        // invalid params are rejected on the way in
        assert!(serde_json::from_str::<WeightFunction>(r#"{"kind":"exp","param":0.0}"#).is_err());
        assert!(serde_json::from_str::<WeightFunction>(r#"{"kind":"nope","param":0.1}"#).is_err());
    }
}
