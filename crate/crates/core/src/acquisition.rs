//! Informativeness scores and top-A batch selection.
//!
//! Every score is oriented so that higher means more informative; the
//! minimal-margin measure is reported as `1 - margin`.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidential::SIMPLEX_TOLERANCE;
use crate::model::{ClassifierModel, Head, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Minimal margin over the Dirichlet expected probabilities `α/S`.
    DealMinMargin,
    /// Shannon entropy over `α/S`.
    DealEntropy,
    SoftmaxMinMargin,
    SoftmaxEntropy,
    /// `1 - max p` on whichever head the model has.
    LeastConfidence,
    /// Variation ratio of a single deterministic model. With one forward
    /// pass the modal class frequency is `max p`, so this equals least
    /// confidence; the sampling-based forms are not provided.
    VariationRatio,
    /// I.i.d. uniform scores.
    Random,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::DealMinMargin,
        StrategyKind::DealEntropy,
        StrategyKind::SoftmaxMinMargin,
        StrategyKind::SoftmaxEntropy,
        StrategyKind::LeastConfidence,
        StrategyKind::VariationRatio,
        StrategyKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::DealMinMargin => "deal_min_margin",
            StrategyKind::DealEntropy => "deal_entropy",
            StrategyKind::SoftmaxMinMargin => "softmax_min_margin",
            StrategyKind::SoftmaxEntropy => "softmax_entropy",
            StrategyKind::LeastConfidence => "least_confidence",
            StrategyKind::VariationRatio => "variation_ratio",
            StrategyKind::Random => "random",
        }
    }

    /// `Some(true)` for strategies that need the evidential head, `Some(false)`
    /// for those that need softmax, `None` when either works.
    pub fn requires_evidential(self) -> Option<bool> {
        match self {
            StrategyKind::DealMinMargin | StrategyKind::DealEntropy => Some(true),
            StrategyKind::SoftmaxMinMargin | StrategyKind::SoftmaxEntropy => Some(false),
            _ => None,
        }
    }

    pub fn is_compatible_with(self, head: &Head) -> bool {
        self.requires_evidential().is_none_or(|ev| ev == head.is_evidential())
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("strategy", format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionStrategy {
    pub kind: StrategyKind,
    /// Seed for [`StrategyKind::Random`]; ignored otherwise.
    #[serde(default)]
    pub rng_seed: u64,
}

impl AcquisitionStrategy {
    pub fn new(kind: StrategyKind) -> Self {
        Self { kind, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub pool_index: usize,
    pub score: f64,
    pub tiebreak_key: u64,
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 class probabilities, got {}", p.len())));
    }
    if p.iter().any(|v| !(v.is_finite() && (0.0..=1.0 + SIMPLEX_TOLERANCE).contains(v))) {
        return Err(Error::Domain("probabilities must lie in [0, 1]".into()));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// `1 - (p_k1 - p_k2)` for the two most probable classes.
pub fn margin_score(p: &[f64]) -> Result<f64> {
    check_probabilities(p)?;
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in p {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    Ok((1.0 - (first - second)).clamp(0.0, 1.0))
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy_score(p: &[f64]) -> Result<f64> {
    check_probabilities(p)?;
    Ok(p.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum::<f64>().max(0.0))
}

pub fn least_confidence_score(p: &[f64]) -> Result<f64> {
    check_probabilities(p)?;
    Ok((1.0 - p.iter().cloned().fold(0.0, f64::max)).max(0.0))
}

/// Single-model variation ratio; identical to [`least_confidence_score`].
pub fn variation_ratio_score(p: &[f64]) -> Result<f64> {
    least_confidence_score(p)
}

fn random_scores(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Score already-computed predictions. `pool_indices[i]` names the pool
/// element that produced `predictions[i]`.
pub fn score_predictions(
    pool_indices: &[usize],
    predictions: &[Prediction],
    strategy: &AcquisitionStrategy,
) -> Result<Vec<ScoredSample>> {
    if pool_indices.len() != predictions.len() {
        return Err(Error::DimensionMismatch { expected: pool_indices.len(), found: predictions.len() });
    }
    let scores: Vec<f64> = match strategy.kind {
        StrategyKind::Random => random_scores(pool_indices.len(), strategy.rng_seed),
        kind => predictions
            .iter()
            .map(|pred| {
                let evidential = matches!(pred, Prediction::Evidential(_));
                if kind.requires_evidential().is_some_and(|ev| ev != evidential) {
                    return Err(Error::config(
                        "strategy",
                        format!("{kind} cannot score {} predictions", if evidential { "evidential" } else { "softmax" }),
                    ));
                }
                let p = pred.probabilities();
                match kind {
                    StrategyKind::DealMinMargin | StrategyKind::SoftmaxMinMargin => margin_score(p),
                    StrategyKind::DealEntropy | StrategyKind::SoftmaxEntropy => entropy_score(p),
                    StrategyKind::LeastConfidence => least_confidence_score(p),
                    StrategyKind::VariationRatio => variation_ratio_score(p),
                    StrategyKind::Random => unreachable!(),
                }
            })
            .collect::<Result<_>>()?,
    };
    Ok(attach_indices(pool_indices, scores))
}

fn attach_indices(pool_indices: &[usize], scores: Vec<f64>) -> Vec<ScoredSample> {
    pool_indices
        .iter()
        .zip(scores)
        .map(|(&pool_index, score)| ScoredSample { pool_index, score, tiebreak_key: pool_index as u64 })
        .collect()
}

/// Score every pool row with the model.
pub fn score_pool<R: AsRef<[f64]> + Sync>(
    model: &ClassifierModel,
    pool_indices: &[usize],
    rows: &[R],
    strategy: &AcquisitionStrategy,
) -> Result<Vec<ScoredSample>> {
    if pool_indices.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty pool".into()));
    }
    if pool_indices.len() != rows.len() {
        return Err(Error::DimensionMismatch { expected: pool_indices.len(), found: rows.len() });
    }
    if !strategy.kind.is_compatible_with(&model.config().head) {
        return Err(Error::config(
            "strategy",
            format!("{} is incompatible with the model head {:?}", strategy.kind, model.config().head),
        ));
    }
    if strategy.kind == StrategyKind::Random {
        return Ok(attach_indices(pool_indices, random_scores(pool_indices.len(), strategy.rng_seed)));
    }
    let predictions = model.predict_batch(rows)?;
    score_predictions(pool_indices, &predictions, strategy)
}

fn rank(a: &ScoredSample, b: &ScoredSample) -> Ordering {
    b.score.total_cmp(&a.score).then(a.tiebreak_key.cmp(&b.tiebreak_key))
}

/// The `a` highest-scoring pool indices, ordered by descending score and
/// then ascending tiebreak key. Scores are fixed within a round, so this is
/// the same as `a` rounds of argmax-and-remove.
pub fn select_batch(scored: &[ScoredSample], a: usize) -> Result<Vec<usize>> {
    if a > scored.len() {
        return Err(Error::InvalidInput(format!("cannot select {a} samples from a pool of {}", scored.len())));
    }
    if let Some(bad) = scored.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::Domain(format!("non-finite score for pool index {}", bad.pool_index)));
    }
    let mut ranked = scored.to_vec();
    if a < ranked.len() {
        ranked.select_nth_unstable_by(a.saturating_sub(1), rank);
        ranked.truncate(a);
    }
    ranked.sort_unstable_by(rank);
    Ok(ranked.into_iter().map(|s| s.pool_index).collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::evidential::{opinion_from_evidence, EvidenceVector};

    fn sample(pool_index: usize, score: f64) -> ScoredSample {
        ScoredSample { pool_index, score, tiebreak_key: pool_index as u64 }
    }

    #[test]
    fn margin_examples() {
        assert_eq!(margin_score(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(margin_score(&[1.0, 0.0]).unwrap(), 0.0);
        assert!((margin_score(&[0.5, 0.3, 0.2]).unwrap() - 0.8).abs() < 1e-15);
        assert!(margin_score(&[1.0]).is_err());
        assert!(margin_score(&[0.6, 0.6]).is_err());
    }

    #[test]
    fn entropy_and_confidence_examples() {
        assert!((entropy_score(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy_score(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(least_confidence_score(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((least_confidence_score(&[0.7, 0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(variation_ratio_score(&[0.7, 0.3]).unwrap(), least_confidence_score(&[0.7, 0.3]).unwrap());
        assert!(entropy_score(&[0.5, 0.6]).is_err());
        assert!(least_confidence_score(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn selection_examples() {
        let scored = vec![sample(0, 0.1), sample(1, 0.9), sample(2, 0.5)];
        assert_eq!(select_batch(&scored, 2).unwrap(), vec![1, 2]);
        let ties: Vec<_> = [7, 3, 9, 1, 5].iter().map(|i| sample(*i, 0.4)).collect();
        assert_eq!(select_batch(&ties, 3).unwrap(), vec![1, 3, 5]);
        assert!(select_batch(&scored, 4).is_err());
        assert_eq!(select_batch(&scored, 0).unwrap(), Vec::<usize>::new());
        assert!(select_batch(&[sample(0, f64::NAN)], 1).is_err());
    }

    fn evidential_prediction(p: &[f64]) -> Prediction {
        // Evidence proportional to p with total strength 100 gives α/S = p when K = 2.
        let strength = 100.0;
        let e: Vec<f64> = p.iter().map(|v| v * strength - 1.0).collect();
        Prediction::Evidential(opinion_from_evidence(&EvidenceVector::new(e).unwrap()))
    }

    #[test]
    fn deal_margin_prefers_the_ambiguous_sample() {
        let preds = vec![evidential_prediction(&[0.9, 0.1]), evidential_prediction(&[0.55, 0.45])];
        let strategy = AcquisitionStrategy::new(StrategyKind::DealMinMargin);
        let scored = score_predictions(&[10, 11], &preds, &strategy).unwrap();
        assert!(scored[1].score > scored[0].score);
        assert_eq!(select_batch(&scored, 1).unwrap(), vec![11]);
    }

    #[test]
    fn head_mismatch_is_a_config_error() {
        let preds = vec![Prediction::Softmax { probs: vec![0.5, 0.5] }];
        let strategy = AcquisitionStrategy::new(StrategyKind::DealMinMargin);
        assert!(matches!(score_predictions(&[0], &preds, &strategy), Err(Error::Config(_))));
        let ev = vec![evidential_prediction(&[0.5, 0.5])];
        let strategy = AcquisitionStrategy::new(StrategyKind::SoftmaxEntropy);
        assert!(matches!(score_predictions(&[0], &ev, &strategy), Err(Error::Config(_))));
        let strategy = AcquisitionStrategy::new(StrategyKind::LeastConfidence);
        assert!(score_predictions(&[0], &ev, &strategy).is_ok());
    }

    #[test]
    fn random_scores_are_seeded() {
        let preds = vec![Prediction::Softmax { probs: vec![0.5, 0.5] }; 20];
        let idx: Vec<usize> = (0..20).collect();
        let s = AcquisitionStrategy { kind: StrategyKind::Random, rng_seed: 17 };
        let a = score_predictions(&idx, &preds, &s).unwrap();
        let b = score_predictions(&idx, &preds, &s).unwrap();
        assert_eq!(a, b);
        let c = score_predictions(&idx, &preds, &AcquisitionStrategy { rng_seed: 18, ..s }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn strategy_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("bald".parse::<StrategyKind>().is_err());
    }

    /// Literal inner loop: repeatedly take the argmax (lowest index on ties) and remove it.
    fn argmax_with_removal(scored: &[ScoredSample], a: usize) -> Vec<usize> {
        let mut remaining = scored.to_vec();
        let mut picked = Vec::new();
        for _ in 0..a {
            let mut best = 0;
            for (i, s) in remaining.iter().enumerate() {
                let b = &remaining[best];
                if s.score > b.score || (s.score == b.score && s.pool_index < b.pool_index) {
                    best = i;
                }
            }
            picked.push(remaining.remove(best).pool_index);
        }
        picked
    }

    fn probability_vector(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, k).prop_filter_map("non-zero mass", |w| {
            let total: f64 = w.iter().sum();
            (total > 1e-9).then(|| w.iter().map(|v| v / total).collect())
        })
    }

    proptest! {
        #[test]
        fn select_batch_equals_sequential_argmax(
            scores in prop::collection::vec(prop_oneof![Just(0.5), 0.0f64..1.0], 1..300),
            a_frac in 0.0f64..=1.0,
        ) {
            let scored: Vec<_> = scores.iter().enumerate().map(|(i, s)| sample(i, *s)).collect();
            let a = ((scores.len() as f64) * a_frac) as usize;
            prop_assert_eq!(select_batch(&scored, a).unwrap(), argmax_with_removal(&scored, a));
        }

        #[test]
        fn score_ranges(k in 2usize..12, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-12).collect();
            let total: f64 = w.iter().sum();
            let p: Vec<f64> = w.iter().map(|v| v / total).collect();
            let m = margin_score(&p).unwrap();
            let h = entropy_score(&p).unwrap();
            let lc = least_confidence_score(&p).unwrap();
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert!(h >= 0.0 && h <= (k as f64).ln() + 1e-12);
            prop_assert!(lc >= 0.0 && lc <= 1.0 - 1.0 / k as f64 + 1e-12);
        }

        #[test]
        fn deal_and_softmax_margin_agree_on_identical_probabilities(
            rows in prop::collection::vec(probability_vector(2), 1..40),
            a_frac in 0.0f64..=1.0,
        ) {
            let idx: Vec<usize> = (0..rows.len()).collect();
            let softmax: Vec<_> = rows.iter().map(|p| Prediction::Softmax { probs: p.clone() }).collect();
            let deal: Vec<_> = rows
                .iter()
                .map(|p| {
                    let Prediction::Evidential(mut o) = evidential_prediction(&[0.5, 0.5]) else { unreachable!() };
                    o.expected_probs = p.clone();
                    Prediction::Evidential(o)
                })
                .collect();
            let a = (rows.len() as f64 * a_frac) as usize;
            let s1 = score_predictions(&idx, &softmax, &AcquisitionStrategy::new(StrategyKind::SoftmaxMinMargin)).unwrap();
            let s2 = score_predictions(&idx, &deal, &AcquisitionStrategy::new(StrategyKind::DealMinMargin)).unwrap();
            prop_assert_eq!(select_batch(&s1, a).unwrap(), select_batch(&s2, a).unwrap());
        }

        #[test]
        fn scoring_is_permutation_equivariant(
            rows in prop::collection::vec(probability_vector(3), 2..30),
            shift in 1usize..29,
        ) {
            let n = rows.len();
            let idx: Vec<usize> = (0..n).map(|i| 100 + i).collect();
            let preds: Vec<_> = rows.iter().map(|p| Prediction::Softmax { probs: p.clone() }).collect();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let pidx: Vec<usize> = perm.iter().map(|&i| idx[i]).collect();
            let ppreds: Vec<_> = perm.iter().map(|&i| preds[i].clone()).collect();
            for kind in [StrategyKind::SoftmaxEntropy, StrategyKind::SoftmaxMinMargin, StrategyKind::LeastConfidence] {
                let s = AcquisitionStrategy::new(kind);
                let base = score_predictions(&idx, &preds, &s).unwrap();
                let permuted = score_predictions(&pidx, &ppreds, &s).unwrap();
                for (j, &i) in perm.iter().enumerate() {
                    prop_assert_eq!(permuted[j], base[i]);
                }
            }
        }
    }
}
